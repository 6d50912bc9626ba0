import numpy as np
import pandas as pd
import pytest

# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def simulate_var1(A, T, seed, c=None, scale=None, burn=100):
    A = np.asarray(A, dtype=float)
    K = A.shape[0]
    c = np.zeros(K) if c is None else np.asarray(c, dtype=float)
    scale = np.ones(K) if scale is None else np.asarray(scale, dtype=float)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((T + burn, K)) * scale
    y = np.zeros((T + burn, K))
    for t in range(1, T + burn):
        y[t] = c + A @ y[t - 1] + e[t]
    return y[burn:]


def write_panel_csv(path, T=150, K=3, seed=0, names=None, start="2000-01-01"):
    """Synthetic monthly level panel whose log-returns follow a small VAR(1)."""
    if names is None:
        names = ["A", "B", "OIL"][:K] if K <= 3 else [f"V{k}" for k in range(K)]
    A = 0.2 * np.eye(K)
    r = simulate_var1(A, T, seed, scale=np.full(K, 0.02))
    levels = 100 * np.exp(np.cumsum(r, axis=0))
    dates = pd.date_range(start, periods=T, freq="MS").strftime("%Y-%m-%d")
    frame = pd.DataFrame(levels, columns=names)
    frame.insert(0, "date", dates)
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def panel_csv(tmp_path):
    return write_panel_csv(tmp_path / "panel.csv")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
