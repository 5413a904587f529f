import numpy as np
import pytest

from hypflow.curvature import elementary_symmetric, make_function


def cone_samples(F, m, rng, rel_margin=0.05):
    """``m`` random curvature vectors well inside the cone of ``F``.

    Points are drawn around a positive diagonal with mixed signs allowed, then
    kept only if every defining polynomial is at least ``rel_margin`` of its
    value at the scale's umbilic point.
    """
    n = F.n
    out = []
    kmax = n if F.cone.kind.value == "positive" else (F.k or 1)
    while len(out) < m:
        scale = np.exp(rng.uniform(-2.0, 2.0, size=(4 * m, 1)))
        kappa = scale * (1.0 + rng.normal(0.0, 0.8, size=(4 * m, n)))
        if F.cone.kind.value == "positive":
            ok = kappa.min(axis=-1) > rel_margin * scale[:, 0]
        else:
            e = elementary_symmetric(kappa, kmax)
            ok = np.ones(len(kappa), dtype=bool)
            for j in range(1, kmax + 1):
                ok &= e[j] > rel_margin * scale[:, 0] ** j
        out.extend(kappa[ok])
    return np.array(out[:m])


def all_functions(n):
    fs = [make_function("mean", n=n), make_function("geometric", n=n)]
    fs += [make_function("sigma_k", k=k, n=n) for k in range(2, n + 1)]
    return fs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
