"""
Display functions for formatting and printing lab reports.
"""
from datetime import datetime

import numpy as np


def _fmt_vec(x, digits=6):
    return '(' + ', '.join(f"{float(c):.{digits}g}" for c in np.asarray(x)) + ')'


def display_banner(title):
    print(f"\n{'='*80}")
    print(f"{title} - {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"{'='*80}\n")


def display_check_report(ensemble, condition, calibration_product, moments, branching, lattice):
    """
    Print the model check.

    Args:
        ensemble: Ensemble that was checked
        condition: ConditionCReport
        calibration_product: r(m) E[N]
        moments: list of MomentReport
        branching: BranchingHypotheses
        lattice: LatticeReport
    """
    display_banner(f"MODEL CHECK: {ensemble.name}")
    print(f"Dimension: {ensemble.dimension}   Atoms: {ensemble.size}   "
          f"E[N]: {ensemble.branching.mean:g}   N_max: {ensemble.branching.max_value}")
    print(f"Model hash: {ensemble.fingerprint()}\n")

    print("🔍 Condition C (heuristic)")
    print(f"   Pattern irreducible: {'✅' if condition.pattern_irreducible else '❌'}")
    word = condition.primitive_word_length
    print(f"   Positive pattern product: {'✅ length ' + str(word) if condition.primitive else '❌'}")
    print(f"   Limit set spans R^d: {'✅' if condition.limit_set_spans else '❌'} "
          f"(rank {condition.limit_set_rank} from {condition.products_used} products)")
    for failure in condition.failures:
        print(f"   ❌ {failure}")

    print("\n🔍 Calibration")
    mark = '✅' if abs(calibration_product - 1.0) <= 1e-10 else '⚠️ '
    print(f"   {mark} r(m)E[N] = {calibration_product:.12g}")

    print("\n🔍 Moment hypotheses")
    for report in moments:
        print(f"   s = {report.s:g}: E|A|^s = {report.norm_moment:.6g}, "
              f"E|A|^s|log|A|| = {report.norm_log_moment:.6g}, "
              f"E|A|^s|log iota| = {report.iota_log_moment:.6g} "
              f"{'✅' if report.finite else '⚠️ '}")
    if moments and not moments[0].all_invertible:
        print("   ⚠️  Some atom is singular")

    print("\n🔍 Branching")
    print(f"   min N = {branching.min_children}, E[N^2] = {branching.second_moment:g} "
          f"{'✅' if branching.passed else '⚠️ '}")

    print("\n🔍 Lattice diagnostic")
    if lattice.status == 'arithmetic-like':
        print(f"   ⚠️  arithmetic-like (spacing {lattice.spacing:.6g}, residual {lattice.residual:.2e})")
    else:
        print(f"   {lattice.status} ({lattice.sample_count} products)")
    print(f"\n{'-'*80}")


def display_check_verdict(exit_code):
    if exit_code == 0:
        print("\n✅ MODEL PASSES ALL CHECKS\n")
    elif exit_code == 2:
        print("\n⚠️  MODEL PASSES WITH WARNINGS\n")
    else:
        print("\n❌ MODEL FAILS CONDITION C\n")


def display_spectral_summary(perron, results, derivative, chi_solution=None):
    """Print kappa(s), the kappa(1) versus r(m) gap and the three derivative values."""
    display_banner("TRANSFER OPERATOR SPECTRUM")
    print(f"{'s':>8} {'kappa(s)':>20} {'alpha(s)':>14} {'residual':>12}")
    for result in results:
        print(f"{result.s:>8g} {result.kappa:>20.12g} {result.alpha:>14.6g} {result.residual:>12.2e}")

    at_one = derivative.kappa_one
    print(f"\nkappa(1) = {at_one:.12g}   r(m) = {perron.radius:.12g}   "
          f"relative gap = {abs(at_one - perron.radius) / perron.radius:.2e}")
    print("\nkappa'(1-):")
    print(f"   kappa(1) alpha(1):     {derivative.alpha_form:.8g}")
    print(f"   stationary formula:    {derivative.stationary_form:.8g} (deviation {derivative.deviation:.2e})")
    print(f"   finite difference:     {derivative.fd_form:.8g}")
    print(f"   {'✅ consistent' if derivative.consistent else '⚠️  alpha form and finite difference disagree'}")

    if chi_solution is not None:
        print(f"\n📐 chi = {chi_solution.chi:.8f}  (kappa(chi) E[N] = "
              f"{chi_solution.kappa_at_chi * chi_solution.branching_mean:.10f})")
    print(f"\n{'-'*80}")


def display_cascade_summary(v, samples, martingale):
    display_banner("CASCADE MARTINGALE")
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(len(samples)) if len(samples) > 1 else np.zeros_like(mean)
    print(f"Replicas: {len(samples)}")
    print(f"v:           {_fmt_vec(v)}")
    print(f"mean Y_n:    {_fmt_vec(mean)}")
    print(f"std. error:  {_fmt_vec(se, 3)}")
    print(f"\nOne-step check (depth {martingale.depth}, {martingale.replicas} trees x "
          f"{martingale.extensions} extensions)")
    print(f"   max |z| = {martingale.max_z:.3g}   mean ratio = {martingale.mean_ratio:.6f}")
    print(f"   {'✅ martingale step holds' if martingale.passed else '❌ martingale step fails'}")
    print(f"\n{'-'*80}")


def display_fixpoint_summary(pool, v, nondegeneracy, moments):
    display_banner("FIXED POINT POOL")
    print(f"Particles: {pool.size}   Generations: {pool.generation}")
    print(f"pool mean:   {_fmt_vec(pool.mean())}")
    print(f"v:           {_fmt_vec(v)}")
    print(f"median |Z| / |v| = {nondegeneracy.median_norm_ratio:.4g}")

    last = pool.history[-1]
    if last.proxy_distance is not None:
        print(f"last proxy distance = {last.proxy_distance:.3g}")

    print(f"\nkappa'(1-) = {nondegeneracy.kappa_slope:.6g}")
    if nondegeneracy.slope_negative:
        print("   Nondegenerate regime expected")
    else:
        print("   Degenerate regime expected (pool collapses)")
    print(f"   {'✅ statements agree' if nondegeneracy.consistent else '⚠️  statements disagree'}")

    if moments:
        print("\nMoments E|Z|^s:")
        for row in moments:
            note = '' if row.prediction is None else f"  kappa(s)E[N]-1 = {row.prediction:+.4f}"
            print(f"   s = {row.s:g}: {row.estimates[-1]:.6g}  [{row.verdict}]{note}")
    print(f"\n{'-'*80}")


def display_tail_summary(reports, chi_spectral, harmonicity, shape=None):
    display_banner("TAIL OF THE FIXED POINT")
    print(f"spectral chi = {chi_spectral:.6f}\n")
    print(f"{'direction':<28} {'chi_hat':>9} {'90% CI':>22} {'k':>7} {'D_hat':>12}")
    for report in reports:
        ci = f"[{report.ci[0]:.3f}, {report.ci[1]:.3f}]"
        print(f"{_fmt_vec(report.direction, 4):<28} {report.chi_hat:>9.4f} {ci:>22} "
              f"{report.k_used:>7} {report.D_hat:>12.5g}")

    print("\nHarmonicity ratios:")
    for row in harmonicity:
        print(f"   {_fmt_vec(row.direction, 4):<28} {row.ratio:.4f} {'✅' if row.passed else '❌'}")

    if shape is not None:
        print(f"\nShape correlation with e*^chi: {shape.correlation:.4f} "
              f"{'✅' if shape.passed else '❌'}")
    print(f"\n{'-'*80}")
