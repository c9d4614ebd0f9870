import numpy as np
import pytest

_ACCEPTANCE_LINES: list[str] = []


def cn(rng, *shape):
    """Standard circular complex normal samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_problem(seed, N=4, k_p=2, k_s=8, signal=1.0):
    """Random (Z, S, v) with a coloured covariance and a rank-one signal."""
    rng = np.random.default_rng(seed)
    A = cn(rng, N, N) + 2 * np.eye(N)
    v = cn(rng, N)
    Z = A @ cn(rng, N, k_p) + signal * np.outer(v, cn(rng, k_p))
    R = A @ cn(rng, N, k_s)
    return Z, R @ R.conj().T, v


def random_pd(rng, N):
    X = cn(rng, N, 2 * N)
    return X @ X.conj().T + 0.1 * np.eye(N)


def well_conditioned(rng, N, cond=1e3):
    """Random complex matrix with condition number at most ``cond``."""
    U, _ = np.linalg.qr(cn(rng, N, N))
    V, _ = np.linalg.qr(cn(rng, N, N))
    s = np.exp(rng.uniform(0, np.log(cond), N))
    s[0], s[-1] = 1.0, cond
    return U @ np.diag(s) @ V


def random_unitary(rng, k):
    Q, R = np.linalg.qr(cn(rng, k, k))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_invertible(rng, N, max_cond=1e3):
    """Complex Gaussian matrix, redrawn until its condition number is at most ``max_cond``."""
    while True:
        B = cn(rng, N, N)
        if np.linalg.cond(B) <= max_cond:
            return B


def model_problem(seed, N=None, k_p=None, k_s=None):
    """One draw ``(Z, S, v, K_S)`` from the clutter model with random geometry."""
    from rsdetect import Scenario, draw_dataset

    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 17)) if N is None else N
    k_p = int(rng.integers(1, 6)) if k_p is None else k_p
    k_s = int(rng.integers(N, 3 * N + 1)) if k_s is None else k_s
    sc = Scenario(N=N, K_P=k_p, K_S=k_s, snr_db=float(rng.uniform(0, 25)),
                  delta=float(rng.uniform(0, 1)))
    ds = draw_dataset(sc, "H1" if seed % 2 else "H0", sc.actual_steering(), (seed, 0))
    return ds.Z, ds.S, sc.nominal_steering(), k_s


@pytest.fixture
def acceptance_log():
    def record(number, passed, text):
        line = f"[criterion {number}] {'PASS' if passed else 'FAIL'}: {text}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
