"""End-to-end acceptance checks, one per criterion.

Each check prints a single ``[PASS]``/``[FAIL]`` line; the lines are also
repeated in the terminal summary.  Run standalone with
``python3 tests/test_acceptance.py`` or through pytest.
"""
import itertools
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import conftest
from rcip.calibration import CalibrationConfig, RiskSpec, calibrate
from rcip.cli import main as cli_main
from rcip.concentration import binomial_cdf, hb_pvalue
from rcip.dataset import PackedDataset
from rcip.evaluation import (
    ablation_surface,
    evaluate,
    fit_method,
    fwer_monte_carlo,
    union_event_rates,
    wilson_interval,
    wilson_slack,
)
from rcip.hallway import WorldConfig, generate_dataset
from rcip.scoring import causal_action_set, sequence_confidence
from rcip.synthetic import GENERATORS
from rcip.types import ParamPair, ScenarioRecord, StepContext

NUM_TRIALS = 500
NUM_RECORDS = 400
FWER_DELTA = 0.05
FWER_BOUND = FWER_DELTA + 3 * math.sqrt(FWER_DELTA * (1 - FWER_DELTA) / NUM_TRIALS)
NUMERIC_RTOL = 1e-12


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


def hallway_split(preset: str, seed: int, **kw):
    cfg = WorldConfig.preset(preset, seed=seed, **kw)
    return generate_dataset(cfg, NUM_RECORDS), generate_dataset(cfg, NUM_RECORDS, start_index=NUM_RECORDS)


# -- 1, 2: family-wise error ------------------------------------------------------------

def test_c01_fwer_single_risk():
    cfg = CalibrationConfig(delta=FWER_DELTA, risks=(RiskSpec("miscoverage", 0.15),))
    rep = fwer_monte_carlo(GENERATORS["bernoulli"](), cfg, NUM_TRIALS, NUM_RECORDS, seed=1)
    ok = rep.observed_fwer <= FWER_BOUND
    report(1, "FWER, single risk", ok,
           f"observed {rep.observed_fwer:.4f} <= bound {FWER_BOUND:.4f} over {NUM_TRIALS} trials")
    assert ok


def test_c02_fwer_multi_risk():
    cfg = CalibrationConfig(delta=FWER_DELTA, num_chains=50,
                            risks=(RiskSpec("miscoverage", 0.15), RiskSpec("help", 0.5)))
    rep = fwer_monte_carlo(GENERATORS["bernoulli"](), cfg, NUM_TRIALS, NUM_RECORDS, seed=2)
    nonempty = sum(t.valid_size > 0 for t in rep.log)
    ok = rep.observed_fwer <= FWER_BOUND and nonempty > NUM_TRIALS // 2
    report(2, "FWER, joint coverage and help", ok,
           f"observed {rep.observed_fwer:.4f} <= bound {FWER_BOUND:.4f}; non-empty valid sets {nonempty}/{NUM_TRIALS}")
    assert ok


# -- 3: causal reconstruction ------------------------------------------------------------

def _random_record(rng):
    steps = []
    for _ in range(int(rng.integers(1, 4))):
        n = int(rng.integers(1, 5))
        steps.append(StepContext(tuple(rng.normal(scale=2.0, size=n).tolist()),
                                 tuple(rng.integers(0, n, size=n).tolist()), int(rng.integers(n))))
    return ScenarioRecord("eq", tuple(steps))


def test_c03_causal_sequence_equivalence():
    rng = np.random.default_rng(np.random.SeedSequence([3, 0]))
    draws = discrepancies = sequences = 0
    for i in range(1000):
        rec = _random_record(rng)
        theta = float(rng.choice([0.01, 0.3, 1.0, 4.0]))
        seqs = list(itertools.product(*(range(s.num_intents) for s in rec.steps)))
        confs = [sequence_confidence(rec, s, ParamPair(0.0, theta)) for s in seqs]
        # odd draws put lambda exactly on an attained score to probe the inclusive boundary
        lam = float(confs[int(rng.integers(len(confs)))]) if i % 2 else float(rng.uniform())
        p = ParamPair(min(max(lam, 0.0), 1.0), theta)
        sets = causal_action_set(rec, p)
        for seq, conf in zip(seqs, confs):
            member = all(st.intent_to_action[z] in sets[t] for t, (st, z) in enumerate(zip(rec.steps, seq)))
            discrepancies += (conf >= p.lam) != member
            sequences += 1
        draws += 1
    ok = discrepancies == 0
    report(3, "causal/sequence set equivalence", ok,
           f"{discrepancies} discrepancies over {draws} draws, {sequences} sequences")
    assert ok


# -- 4: union bound -------------------------------------------------------------------

def test_c04_union_bound():
    gen = GENERATORS["multistep"]()
    a_cov, a_help = 0.5, 0.3
    cfg = CalibrationConfig(delta=FWER_DELTA, num_chains=50,
                            risks=(RiskSpec("miscoverage", a_cov), RiskSpec("help", a_help)))
    n_test = 10_000
    test = gen.sample(np.random.default_rng(np.random.SeedSequence([4, 999])), n_test)
    limit = a_cov + a_help + wilson_slack(a_cov + a_help, n_test)
    worst, checked = 0.0, 0
    for t in range(10):
        res = calibrate(gen.sample(np.random.default_rng(np.random.SeedSequence([4, t])), NUM_RECORDS), cfg)
        if not res.valid_params:
            continue
        rates = union_event_rates(test, res.valid_params)
        worst = max(worst, float(rates.max()))
        checked += len(rates)
    ok = checked > 0 and worst <= limit
    report(4, "union bound on joint event", ok,
           f"worst P(miscover or help) {worst:.4f} <= {limit:.4f} over {checked} selected parameters")
    assert ok


# -- 5-7: hallway -----------------------------------------------------------------

def test_c05_hallway_coverage():
    cal, test = hallway_split("medium", seed=5)
    policy, info = fit_method("rcip", cal, 0.85, CalibrationConfig(delta=0.01))
    lo, _ = wilson_interval(round(0.85 * NUM_RECORDS), NUM_RECORDS)
    success = evaluate(test, policy, "rcip").plan_success if policy else math.nan
    ok = policy is not None and success >= lo
    report(5, "hallway medium plan success", ok,
           f"plan success {success:.4f} >= {lo:.4f} (lambda {info.get('lambda')}, theta {info.get('theta')})")
    assert ok


def test_c06_help_rate_dominance():
    cal, test = hallway_split("medium", seed=0, logit_scale=2.0)
    rows, ok = [], True
    for target in (0.7, 0.85):
        helps = {}
        for m in ("rcip", "knowno", "simple"):
            policy, _ = fit_method(m, cal, target)
            helps[m] = evaluate(test, policy, m).plan_help if policy else math.nan
        ok &= helps["rcip"] <= helps["knowno"] and helps["rcip"] <= helps["simple"]
        rows.append(f"{target}: rcip {helps['rcip']:.3f} knowno {helps['knowno']:.3f} simple {helps['simple']:.3f}")
    report(6, "help rate dominance, logits x2", ok, "; ".join(rows))
    assert ok


def test_c07_model_quality_ladder():
    helps, last = [], None
    for preset in ("weak", "medium", "converged"):
        cal, test = hallway_split(preset, seed=7)
        policy, _ = fit_method("rcip", cal, 0.85)
        last = evaluate(test, policy, "rcip") if policy else None
        helps.append(last.plan_help if last else math.nan)
    ok = (all(a >= b for a, b in zip(helps, helps[1:])) and last is not None
          and last.plan_help == 0.0 and last.plan_success == 1.0)
    tail = f"converged success {last.plan_success:.3f}" if last else "converged infeasible"
    report(7, "model-quality ladder", ok, f"help weak->medium->converged {helps}; {tail}")
    assert ok


# -- 8: numerics -------------------------------------------------------------------

def _binomial_worst_error():
    from fractions import Fraction

    worst = 0.0
    for p in (0.1, 0.25, 0.5, 0.85):
        P = Fraction(p)
        for n in range(1, 51):
            ref = Fraction(0)
            for k in range(n + 1):
                ref += math.comb(n, k) * P**k * (1 - P) ** (n - k)
                worst = max(worst, float(abs(Fraction(binomial_cdf(k, n, p)) - ref) / ref))
    return worst


def _hb_spot_errors():
    # (r_hat, alpha, m, stated value)
    spots = [(0.0, 0.15, 400, math.e * 0.85**400), (0.0, 0.3, 50, math.e * 0.7**50), (1.0, 0.5, 10, 2.0**-10)]
    return [(r, a, m, want, hb_pvalue(r, a, m)) for r, a, m, want in spots]


def test_c08_numerics():
    worst = _binomial_worst_error()
    spots = _hb_spot_errors()
    bin_ok = worst <= NUMERIC_RTOL
    hb_ok = all(abs(got - want) <= NUMERIC_RTOL * want for _, _, _, want, got in spots)
    spot_text = ", ".join(f"hb({r:g},{a:g},{m})={got:.6g} vs {want:.6g}" for r, a, m, want, got in spots)
    report(8, "numerics oracles", bin_ok and hb_ok,
           f"binomial worst rel err {worst:.2e} ({'ok' if bin_ok else 'too large'}); {spot_text}")
    assert bin_ok, f"binomial cdf relative error {worst:.3e}"
    assert hb_ok, spot_text


# -- 9: ablation ------------------------------------------------------------------

def test_c09_ablation_surface():
    cal, _ = hallway_split("medium", seed=9)
    ac = [round(x, 2) for x in np.linspace(0.0, 0.45, 10)]
    ah = [round(x, 2) for x in np.linspace(0.0, 1.0, 11)]
    cfg = CalibrationConfig(num_chains=30)
    surf = ablation_surface(cal, ac, ah, delta=0.01, config=cfg)
    grid = np.array([[surf[(a, h)] for h in ah] for a in ac])
    monotone = bool(np.all(np.diff(grid, axis=0) >= 0) and np.all(np.diff(grid, axis=1) >= 0))
    zero = grid == 0
    # zero cells are closed under moving down or left
    lower_left = all(zero[:i + 1, :j + 1].all() for i, j in zip(*np.nonzero(zero)))
    ok = monotone and lower_left and zero[0, 0] and not zero.all()
    report(9, "ablation surface structure", ok,
           f"monotone {monotone}, zero cells {int(zero.sum())}/{zero.size} lower-left {lower_left}, max {grid.max()}")
    assert ok


# -- 10: determinism -------------------------------------------------------------

def _cli(*argv) -> int:
    try:
        return cli_main([str(a) for a in argv])
    except SystemExit as exc:
        return int(exc.code)


def test_c10_cli_determinism(tmp_path):
    def commands(d):  # identical argv on every call
        return [
            ("simulate", "--env", "hallway", "--episodes", 200, "--seed", 10, "--preset", "medium", "--out", d / "cal.jsonl"),
            ("simulate", "--episodes", 200, "--seed", 10, "--start-index", 200, "--out", d / "test.jsonl"),
            ("calibrate", "--data", d / "cal.jsonl", "--out", d / "res.json"),
            ("evaluate", "--data", d / "test.jsonl", "--method", "rcip", "--params", d / "res.json", "--out", d / "ev.json"),
            ("evaluate", "--data", d / "test.jsonl", "--method", "simple", "--cal", d / "cal.jsonl",
             "--target", 0.85, "--out", d / "ev_simple.json"),
            ("curves", "--cal", d / "cal.jsonl", "--test", d / "test.jsonl", "--methods",
             "rcip,knowno,simple,entropy,nohelp", "--lambda-grid", 500, "--out", d / "curves.csv"),
            ("fwer", "--trials", 50, "--generator", "bernoulli", "--seed", 10, "--records", 200,
             "--lambda-grid", 500, "--out", d / "fwer.json"),
        ]

    # outputs echo input paths, so both runs share one directory
    runs = []
    for _ in range(2):
        codes = [_cli(*c) for c in commands(tmp_path)]
        runs.append((codes, {p.name: p.read_bytes() for p in sorted(tmp_path.iterdir())}))
    (codes_a, files_a), (codes_b, files_b) = runs
    differing = sorted(k for k in files_a if files_a[k] != files_b.get(k))
    ok = codes_a == codes_b == [0] * len(codes_a) and not differing and len(files_a) == 7
    report(10, "CLI determinism", ok,
           f"{len(codes_a)} commands, exit codes {codes_a}, {len(files_a)} outputs, differing {differing or 'none'}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
