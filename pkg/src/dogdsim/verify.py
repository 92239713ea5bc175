"""Invariant suites that turn the analytical bounds into runtime checks.

Every suite returns a list of :class:`Check` records; a suite passes when
all of its checks do.
"""

from dataclasses import dataclass

import numpy as np

from .dda import dda_run
from .dogd import dogd_run, make_schedule
from .feasible_set import Box, L2Ball
from .metrics import check_network_bound
from .objectives import (ObjectiveSpec, gen_quadratic_streams, gen_svm_streams,
                         lipschitz_bound)
from .serial_opt import (lazy_projection_regret, lazy_projection_run, lemma1_check,
                         reference_optimum, zinkevich_check)
from .topology import build_graph, metropolis_weights, mixing_report

SUITES = ("mixing", "zinkevich", "lemma1", "consensus", "network-bound", "schedule")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def suite_topologies(seed=0):
    """The four built-in topologies, keyed by a short label."""
    return {
        "complete-10": build_graph("complete", 10),
        "cycle-8": build_graph("cycle", 8),
        "rgg-10": build_graph("random_geometric", 10, seed=seed),
        "expander-16": build_graph("k_regular_expander", 16, {"degree": 4}, seed=seed),
    }


def mixing_suite(seed=0, t_max=200, tol=1e-10):
    checks = []
    for label, g in suite_topologies(seed).items():
        cm = metropolis_weights(g)
        rep = mixing_report(cm.p, t_max, tol)
        checks.append(Check(f"mixing {label}", rep.passed,
                            f"slem={cm.slem:.6f} t<={t_max} worst excess {rep.worst_violation:.3e}"))
    return checks


def zinkevich_suite(seed=0, runs=50, tol=1e-9):
    """Randomised lazy-projection runs on quadratic and hinge streams."""
    rng = np.random.default_rng(seed)
    checks = []
    for r in range(runs):
        d = int(rng.integers(1, 11))
        T = int(rng.integers(1, 1001))
        a = float(1.0 - rng.random())  # (0, 1]
        sigma = float(rng.choice([0.1, 0.5, 1.0, 2.0]))
        radius = float(rng.uniform(0.5, 5.0))
        # boxes only for quadratics, whose reference optimum is closed form
        fs = Box(-radius * np.ones(d), radius * np.ones(d)) if r % 4 == 0 else L2Ball(radius, dim=d)
        data_seed = int(rng.integers(2**31))
        if r % 2 == 0:
            spec = ObjectiveSpec("quadratic", sigma, fs)
            X = gen_quadratic_streams(1, T, d, data_seed, mean_scale=2.0).X[0]
            y = None
        else:
            spec = ObjectiveSpec("hinge_l2", sigma, fs)
            st = gen_svm_streams(1, T, d, data_seed)
            X, y = st.X[0], st.y[0]
        yy = np.ones(T) if y is None else y

        def oracle(t, w):
            return spec.grads(w[None], X[t:t + 1], yy[t:t + 1] if y is not None else None)[0]

        def loss(t, w):
            return float(spec.losses(np.atleast_2d(w), X[t:t + 1],
                                     yy[t:t + 1] if y is not None else None)[0])

        w1 = fs.sample_uniform(rng, 1)[0]
        tr = lazy_projection_run(oracle, fs, a, w1, T)
        w_star = reference_optimum(spec, X, y, tol=1e-6,
                                   seed=data_seed).w_star
        chk = zinkevich_check(tr, w_star, tol=tol)
        reg = lazy_projection_regret(tr, loss, w_star, tol=tol)
        ok = chk.passed and reg.passed
        checks.append(Check(f"zinkevich run {r:02d}", ok,
                            f"{spec.family} {fs.kind} d={d} T={T} a={a:.3f}: "
                            f"lhs={chk.lhs:.6g} regret={reg.lhs:.6g} rhs={chk.rhs:.6g}"))
    return checks


def lemma1_configs(seed=0):
    """The fig1 objective and three quadratic set-ups, as ``(label, spec, X, y)``."""
    out = []
    st = gen_svm_streams(10, 600, 100, seed)
    spec = ObjectiveSpec("hinge_l2", 0.1, L2Ball(5.0, dim=100))
    out.append(("fig1 hinge", spec.with_L(lipschitz_bound(spec, st)), *st.pooled()))
    for label, sigma, fs, d in [
        ("quadratic ball r=1", 1.0, L2Ball(1.0, dim=3), 3),
        ("quadratic ball r=5", 0.5, L2Ball(5.0, dim=20), 20),
        ("quadratic box", 2.0, Box(-np.ones(4), 2 * np.ones(4)), 4),
    ]:
        st = gen_quadratic_streams(4, 50, d, seed + 1, mean_scale=2.0)
        spec = ObjectiveSpec("quadratic", sigma, fs)
        out.append((label, spec.with_L(lipschitz_bound(spec, st)), *st.pooled()))
    return out


def lemma1_suite(seed=0, samples=1000, tol=1e-6):
    checks = []
    for label, spec, X, y in lemma1_configs(seed):
        ref = reference_optimum(spec, X, y)
        res = lemma1_check(spec, lambda W: spec.batch_value(W, X, y), ref, samples, seed, tol)
        checks.append(Check(f"lemma1 {label}", res.passed,
                            f"max gap {res.max_gap:.6g} <= bound {res.bound:.6g}"))
    return checks


def consensus_suite(seed=0, tol=1e-9):
    """Average-accumulator recursion on DOGD and DDA runs over every topology."""
    checks = []
    for label, g in suite_topologies(seed).items():
        cm = metropolis_weights(g)
        n = g.n
        for family in ("quadratic", "hinge_l2"):
            d = 5
            if family == "quadratic":
                st = gen_quadratic_streams(n, 126, d, seed, mean_scale=3.0, node_spread=1.0)
                spec = ObjectiveSpec(family, 1.0, L2Ball(2.0, dim=d))
            else:
                st = gen_svm_streams(n, 126, d, seed)
                spec = ObjectiveSpec(family, 0.5, L2Ball(2.0, dim=d))
            spec = spec.with_L(lipschitz_bound(spec, st))
            sched = make_schedule(spec.sigma, 126)
            for alg in ("dogd", "dda"):
                if alg == "dogd":
                    tr = dogd_run(spec, st, cm, sched)
                else:
                    tr = dda_run(spec, st, cm, 126)
                worst = float(tr.consensus_residual.max())
                checks.append(Check(f"consensus {alg} {label} {family}", worst <= tol,
                                    f"max residual {worst:.3e} over {tr.n_steps} steps"))
    return checks


def network_bound_suite(seed=0, tol=1e-6):
    """Network error bound along fig1-style DOGD runs on every topology."""
    checks = []
    # rgg-10 is the fig1 graph
    for label, g in suite_topologies(seed).items():
        cm = metropolis_weights(g)
        st = gen_svm_streams(g.n, 600, 100, seed)
        spec = ObjectiveSpec("hinge_l2", 0.1, L2Ball(5.0, dim=100))
        spec = spec.with_L(lipschitz_bound(spec, st))
        tr = dogd_run(spec, st, cm, make_schedule(0.1, 600))
        nb = check_network_bound(tr, spec.L, cm.slem, tol)
        j = nb.worst_step
        checks.append(Check(f"network-bound {label}", nb.passed,
                            f"max error/bound ratio {np.max(nb.max_error / nb.bounds):.4f} "
                            f"(step {j + 1}: {nb.max_error[j]:.4g} vs {nb.bounds[j]:.4g})"))
    return checks


SCHEDULE_GOLDEN = [
    (0.1, 600, ((20, 1.0), (40, 0.5), (80, 0.25), (160, 0.125)), 300),
    (1.0, 14, ((2, 1.0), (4, 0.5), (8, 0.25)), 14),
    (1.0, 2, ((2, 1.0),), 2),
    (1.0, 2046, tuple((2 ** k, 0.5 ** (k - 1)) for k in range(1, 11)), 2046),
]


def schedule_suite(seed=0):
    checks = []
    for sigma, T, rounds, used in SCHEDULE_GOLDEN:
        s = make_schedule(sigma, T)
        ok = s.rounds == rounds and s.used == used and s.k_total == len(rounds)
        listing = "/".join(str(T_k) for T_k, _ in s.rounds)
        steps = ", ".join(f"({T_k},{a_k:g})" for T_k, a_k in s.rounds)
        checks.append(Check(f"schedule sigma={sigma:g} T={T}", ok,
                            f"rounds {listing}; {steps}; used {s.used}; k_total {s.k_total}"))
        aT = [a_k * T_k for T_k, a_k in s.rounds]
        checks.append(Check(f"schedule sigma={sigma:g} T={T} a_k T_k constant",
                            all(v == s.T1 * s.a1 for v in aT), f"a_k T_k = {aT[0]:g}"))
    return checks


_SUITE_FUNCS = {
    "mixing": mixing_suite,
    "zinkevich": zinkevich_suite,
    "lemma1": lemma1_suite,
    "consensus": consensus_suite,
    "network-bound": network_bound_suite,
    "schedule": schedule_suite,
}


def run_suite(name, seed=0):
    if name not in _SUITE_FUNCS:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    return _SUITE_FUNCS[name](seed=seed)
