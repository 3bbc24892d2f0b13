"""
Shared model builders for the test suites.
"""
import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from ensemble import Atom, BranchingLaw, Ensemble, calibrate, load_model

MODELS_DIR = os.path.join(ROOT, 'models')
SLOW = os.getenv('CASCADE_LAB_SLOW') == '1'

A0 = np.array([[1.0, 1.0], [1.0, 2.0]])
R_A0 = (3 + 5 ** 0.5) / 2
ORACLE_W = np.array([0.5, 4.0])
ORACLE_P = np.array([0.8, 0.2])


def model_path(name):
    return os.path.join(MODELS_DIR, f'{name}.json')


def oracle(calibrated=False):
    """W * a0 with W in {0.5 (p=0.8), 4 (p=0.2)} and N = 2."""
    ensemble = Ensemble(2, [Atom(p, w * A0) for p, w in zip(ORACLE_P, ORACLE_W)],
                        BranchingLaw.constant(2), name='oracle')
    return calibrate(ensemble) if calibrated else ensemble


def oracle_kappa(s, scale=1.0):
    return float(ORACLE_P @ (scale * ORACLE_W) ** s) * R_A0 ** s


def identity_collapse(d=2):
    """Single atom I/2 with N = 2: calibrated, and every cascade equals v."""
    return Ensemble(d, [Atom(1.0, 0.5 * np.eye(d))], BranchingLaw.constant(2), name='identity')


def identity_atoms(d=2):
    return Ensemble(d, [Atom(1.0, np.eye(d))], BranchingLaw.constant(2), name='identity')


def random_ensemble(seed, d=2, atoms=3, branching=None):
    """Strictly positive random atoms."""
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(atoms))
    weights[-1] = 1.0 - weights[:-1].sum()
    matrices = rng.uniform(0.1, 1.0, size=(atoms, d, d))
    return Ensemble(d, [Atom(p, a) for p, a in zip(weights, matrices)],
                    branching or BranchingLaw.constant(2), name=f'random{seed}')


def fixture(name, calibrated=False):
    ensemble = load_model(model_path(name))
    return calibrate(ensemble) if calibrated else ensemble
