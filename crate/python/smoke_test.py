"""Smoke test for the bbmsf Python extension.

Build and install first, for example:
    pip install --no-build-isolation ./crates/python
"""

import math

import bbmsf


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    p = bbmsf.ConverterParams.reference_design()
    assert close(p.vo(), 40.3754, 1e-9), p
    assert p.validate(rl=7.255) == []
    assert p.with_d(1.5).validate(rl=7.255) == ["d must satisfy 0 < d < 1"]

    e0 = p.with_d(600 / 18 / 58.6)
    report = bbmsf.steady_state(e0, 225.0)
    assert close(report["dil"], 4.227, 1e-3)
    assert close(report["il_rms"], 6.859, 1e-3)
    assert close(report["switch"]["rms"], 10.895, 1e-3)

    wave = bbmsf.simulate(p, rl=7.255)
    vo = wave["vo"]
    mean_vo = sum(vo) / len(vo)
    assert close(mean_vo, 40.404, 5e-3), mean_vo
    assert {"TON", "TOFF1", "TOFF2"} <= set(wave["interval"])

    g = bbmsf.gvd(p, 7.255, 1.0)
    assert close(20 * math.log10(abs(g)), 35.358, 1e-3)
    f0 = 1 / (2 * math.pi * math.sqrt(p.l * p.co))
    assert close(abs(bbmsf.zo(p, 7.255, f0)), 7.255, 1e-9)
    assert isinstance(bbmsf.gvv(p, 7.255, 100.0), complex)

    pts = bbmsf.numeric_response(p, 7.255, "gvd", [200.0, 1000.0])
    for f, gain in pts:
        a = bbmsf.gvd(p, 7.255, f)
        assert abs(20 * math.log10(abs(gain) / abs(a))) < 0.1

    res = bbmsf.evaluate_scenario(
        600.0, [("non-shaded", 225.0, 29.3, 13.5), ("shaded", 67.5, 15.0, 4.5)]
    )
    assert close(res["i_string"], 5.569, 1e-3)
    assert [e["conversion"] for e in res["entries"]] == ["step_up", "step_down"]

    try:
        bbmsf.simulate(p.with_d(0.8), rl=7.255)
    except bbmsf.NumericalError as exc:
        assert "reset" in str(exc)
    else:
        raise AssertionError("expected a non-reset failure")

    try:
        bbmsf.evaluate_scenario(600.0, [("x", 225.0, 29.3, 2.0)])
    except bbmsf.ConfigError:
        pass
    else:
        raise AssertionError("expected an unreachable output voltage")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
