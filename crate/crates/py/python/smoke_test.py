"""Smoke test for the idlertomo extension module."""

import json
import math
import os
import tempfile

import idlertomo


def main():
    d = idlertomo.IdlerState.from_waveplate("hwp", 22.5)
    assert abs(d.p_h - 0.5) < 1e-12 and abs(d.xi) < 1e-12

    truth = idlertomo.IdlerState(0.3, 2.1, 0.9)
    cfg = idlertomo.Interferometer(truth, t_h=0.85, t_v=0.73)
    v_h, v_v = cfg.visibilities()
    assert abs(v_h - 0.85 * math.sqrt(0.3)) < 1e-12
    assert abs(v_v - 0.9 * 0.73 * math.sqrt(0.7)) < 1e-12

    for phi in (0.0, 1.0, 4.0):
        for setting in ("H", "V"):
            a = cfg.rates(phi, setting)
            b = cfg.rates_exact(phi, setting)
            assert max(abs(x - y) for x, y in zip(a, b)) < 1e-10

    back = idlertomo.Interferometer.from_json(cfg.to_json())
    assert back.to_json() == cfg.to_json()

    cal = idlertomo.calibrate(cfg, seed=1, n=1_000_000_000, noiseless=True)
    assert abs(cal["t_h"] - 0.85) < 1e-6 and abs(cal["t_v"] - 0.73) < 1e-6

    n = 1_000_000_000
    h = idlertomo.Scan.simulate(cfg, "H", seed=0, n=n, noiseless=True)
    v = idlertomo.Scan.simulate(cfg, "V", seed=0, n=n, noiseless=True)
    assert len(h.phases) == 20 and h.setting == "H"

    for method in ("mle", "fringe"):
        r = idlertomo.reconstruct(h, v, cal["t_h"], cal["t_v"], method=method, reference=truth)
        assert r.fidelity > 1 - 1e-6, (method, r.fidelity)
        s = r.state
        assert abs(s.p_h - 0.3) < 1e-4 and abs(s.purity - 0.9) < 1e-4
        rho = r.density_matrix()
        assert abs(rho[0][0].real + rho[1][1].real - 1) < 1e-12
        assert json.loads(r.to_json())["params"]["p_h"] == s.p_h

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "scan.csv")
        h.save_csv(path)
        assert idlertomo.Scan.load(path).counts == h.counts

    fit = idlertomo.fit_sinusoid([2 * math.pi * k / 8 for k in range(8)],
                                 [3 + math.cos(2 * math.pi * k / 8 + 0.4) for k in range(8)])
    assert abs(fit["visibility"] - 1 / 3) < 1e-12

    try:
        idlertomo.IdlerState(1.5, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range population accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
