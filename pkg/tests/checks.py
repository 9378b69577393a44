"""Shared numerical checks used by the unit and acceptance suites."""

import numpy as np

from aivv.engine import EngineConfig, draw_masks, init_params, loss_and_grads


def gradient_probes(n_probes=100, seed=0, eps=1e-4):
    """Relative errors of BPTT gradients against central differences.

    A toy two-layer network with dropout masks drawn once and frozen, so the
    loss is a smooth function of the parameters. The fourth-order stencil
    keeps round-off small enough to resolve gradients near 1e-7.
    """
    rng = np.random.default_rng(seed)
    cfg = EngineConfig(hidden_size=5, lstm_layers=2, dropout_p=0.2, window=6)
    params = init_params(cfg, rng)
    X = rng.normal(size=(7, cfg.window, 1))
    y = rng.normal(size=7)
    masks = draw_masks(cfg, 7, cfg.window, rng)
    _, grads = loss_and_grads(params, X, y, masks, cfg.lstm_layers)
    keys = sorted(params)
    errors = []
    for _ in range(n_probes):
        key = keys[rng.integers(len(keys))]
        idx = tuple(rng.integers(s) for s in params[key].shape)
        old = params[key][idx]

        def loss_at(delta):
            params[key][idx] = old + delta
            return loss_and_grads(params, X, y, masks, cfg.lstm_layers)[0]

        numeric = (8 * (loss_at(eps) - loss_at(-eps)) - (loss_at(2 * eps) - loss_at(-2 * eps))) / (12 * eps)
        params[key][idx] = old
        analytic = grads[key][idx]
        scale = max(abs(numeric), abs(analytic), 1e-7)
        errors.append(abs(numeric - analytic) / scale)
    return np.array(errors)


def coverage_streams(n_streams=20, alpha=0.05, n_cal=2000, n_test=1000, seed=0):
    """Empirical test coverage of the engine's conformal bound on i.i.d. streams.

    A large calibration set keeps the spread of per-stream coverage close to
    the test-set binomial noise; with a few hundred points the calibration
    draw alone moves coverage by about 0.015.
    """
    from aivv.engine import build_engine
    from aivv.telemetry import WindowPairs

    cfg = EngineConfig(hidden_size=8, epochs=5, mc_passes=10, alpha=alpha,
                       cal_ratio=n_cal / (n_cal + 400))
    out = []
    for s in range(n_streams):
        rng = np.random.default_rng([seed, s])
        w = rng.normal(size=cfg.window) / np.sqrt(cfg.window)

        def draw(n):
            X = rng.normal(size=(n, cfg.window))
            y = X @ w + rng.laplace(scale=0.5, size=n)
            return WindowPairs(X, y, np.arange(n))

        engine = build_engine(draw(400 + n_cal), cfg, seed=s)
        test = draw(n_test)
        mu, _ = engine.mc_predict_batch(test.inputs, np.random.default_rng([seed, s, 1]))
        out.append(float(np.mean(np.abs(mu - test.targets) <= engine.conformal_bound)))
    return np.array(out)


# -- acceptance bookkeeping ----------------------------------------------------------

RESULTS: dict = {}


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    """Keep one pass/fail line per acceptance criterion and echo it."""
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS[number] = line
    print(line, flush=True)
    return ok
