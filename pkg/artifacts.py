"""
Run manifests and the files every pipeline writes.

All artifacts of a run live in one output directory next to manifest.json.
CSV files and pool snapshots start with a "# run_id=..." comment and JSON
files carry a "run_id" key, so each artifact names its manifest. Floats are
written with 17 significant digits; reruns with the same command line and
seed give byte-identical artifacts (manifest.json itself records wall time
and worker count, so it is the one file that differs).
"""
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from logzero import logger

from cascade import ParticlePool
from config import Config

MANIFEST_NAME = 'manifest.json'
FLOAT_FORMAT = '%.17g'


def file_sha256(filepath: str) -> str:
    h = hashlib.sha256()
    with open(filepath, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """What was run, on which model, with which seed and grid."""

    command: str
    model_hash: str
    seed: int
    grid_resolution: int
    workers: int
    version: str = Config.VERSION
    parameters: Dict = field(default_factory=dict)
    wall_time: Optional[float] = None
    artifacts: List[str] = field(default_factory=list)

    def deterministic_fields(self) -> Dict:
        return {
            'command': self.command,
            'model_hash': self.model_hash,
            'seed': self.seed,
            'grid_resolution': self.grid_resolution,
            'version': self.version,
            'parameters': self.parameters,
        }

    @property
    def run_id(self) -> str:
        payload = json.dumps(self.deterministic_fields(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['run_id'] = self.run_id
        return data


def _dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + '\n'


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


class RunWriter:
    """
    Writes a run's artifacts; the manifest goes to disk before any result.

    Usage:
        with RunWriter(out_dir, manifest) as run:
            run.write_json('chi.json', {...})
    """

    def __init__(self, out_dir: str, manifest: RunManifest):
        self.out_dir = out_dir
        self.manifest = manifest
        self._started = None

    def __enter__(self):
        os.makedirs(self.out_dir, exist_ok=True)
        self._started = time.monotonic()
        self._write_manifest()
        logger.info(f"run {self.manifest.run_id} ({self.manifest.command}) -> {self.out_dir}")
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest.wall_time = time.monotonic() - self._started
        self._write_manifest()
        return False

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _write_manifest(self):
        with open(self.path(MANIFEST_NAME), 'w') as f:
            f.write(_dumps(self.manifest.to_dict()))

    def _register(self, name: str):
        if name not in self.manifest.artifacts:
            self.manifest.artifacts.append(name)
            self._write_manifest()

    def write_json(self, name: str, payload: Dict) -> str:
        self._register(name)
        body = dict(payload)
        body['run_id'] = self.manifest.run_id
        with open(self.path(name), 'w') as f:
            f.write(_dumps(body))
        return self.path(name)

    def write_csv(self, name: str, frame: pd.DataFrame) -> str:
        self._register(name)
        with open(self.path(name), 'w', newline='') as f:
            f.write(f"# run_id={self.manifest.run_id}\n")
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self.path(name)

    def write_pool(self, name: str, pool) -> str:
        self._register(name)
        save_pool(self.path(name), pool, run_id=self.manifest.run_id)
        return self.path(name)


def read_csv(filepath: str) -> pd.DataFrame:
    return pd.read_csv(filepath, comment='#')


def read_json(filepath: str) -> Dict:
    with open(filepath, 'r') as f:
        return json.load(f)


def save_pool(filepath: str, pool, run_id: str = '') -> None:
    """One particle per line, d floats; header with generation, seed and model hash."""
    header = '\n'.join([
        f"run_id={run_id}",
        f"generation={pool.generation}",
        f"seed={pool.seed}",
        f"ensemble={pool.ensemble_hash}",
        f"dimension={pool.dimension}",
    ])
    np.savetxt(filepath, pool.samples, fmt=FLOAT_FORMAT, header=header, comments='# ')


def load_pool(filepath: str):
    """
    Read a pool snapshot.

    Raises:
        ValueError: if the header is incomplete or a coordinate is negative
    """
    meta = {}
    with open(filepath, 'r') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition('=')
            meta[key] = value
    missing = [k for k in ('generation', 'seed', 'ensemble', 'dimension') if k not in meta]
    if missing:
        raise ValueError(f"{filepath}: pool header lacks {', '.join(missing)}")

    samples = np.loadtxt(filepath, comments='#', ndmin=2)
    if samples.shape[1] != int(meta['dimension']):
        raise ValueError(f"{filepath}: rows have {samples.shape[1]} columns, header says {meta['dimension']}")
    if np.any(samples < 0):
        raise ValueError(f"{filepath}: pool has a negative coordinate")
    return ParticlePool(samples=samples, generation=int(meta['generation']), seed=int(meta['seed']),
                        ensemble_hash=meta['ensemble'])


def orphan_artifacts(out_dir: str) -> List[str]:
    """Files in a run directory that the manifest does not list or that do not name it."""
    manifest = read_json(os.path.join(out_dir, MANIFEST_NAME))
    listed = set(manifest.get('artifacts', []))
    run_id = manifest['run_id']
    orphans = []
    for name in sorted(os.listdir(out_dir)):
        if name == MANIFEST_NAME:
            continue
        filepath = os.path.join(out_dir, name)
        if name not in listed:
            orphans.append(name)
        elif name.endswith('.json'):
            if read_json(filepath).get('run_id') != run_id:
                orphans.append(name)
        else:
            with open(filepath, 'r') as f:
                if f.readline().strip() != f"# run_id={run_id}":
                    orphans.append(name)
    return orphans
