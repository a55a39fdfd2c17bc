"""Smoke test for the divauction_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/divauction_py-*.whl
"""

import divauction_py as da


def main():
    half = da.Dyadic("0.5")
    assert (half.mantissa, half.exponent) == (1, -1)
    assert half + "0.25" == da.Dyadic("0.75")
    assert da.Dyadic("0.1", 4) == da.Dyadic("0.125")
    assert str(da.Dyadic.from_parts(3, -3)) == "0.375"

    out = da.run_round(["0.25", "0.5", "0.875"], ["0.375", "0.625", "0.125"])
    assert out["participants"] == [0, 1] and out["winner"] == 1
    assert out["payment"] == half

    s = da.PrrfesState(2)
    assert s.price() == half
    s.step(False)
    assert (s.mode, s.price()) == ("penalize", da.Dyadic("1"))

    assert da.r_gamma(0.8) == 11
    assert abs(da.zeta(2, 0.5) - 1.0) < 1e-15
    assert da.barrage_price(0.9) == da.Dyadic("10")
    assert da.epsilon(2) == da.Dyadic("0.0625")
    assert abs(da.theorem1_bound(2, 2, 1.0, 2**16) - 106.0) < 1e-9
    assert abs(da.lemma3_bound(2, 1.0, 0.5) - 68.0) < 1e-9

    rep = da.play_divprrfes(["0.5", "0.875"], 2**12, gamma0=0.5, modes=["envelope_coin:0.5"], seed=3)
    assert rep.identity_holds and rep.passed()
    assert sum(rep.subhorizons) == 2**12
    assert rep.total == sum(rep.individual, rep.deviation)
    assert rep.trace_csv.count("\n") == 2**12 + 1

    value, path, breaches = da.dp_optimal("0.625", 0.5, 12)
    assert value > 0 and len(path) == 12 and breaches == 0

    try:
        da.Dyadic("0.1")
    except ValueError:
        pass
    else:
        raise AssertionError("0.1 is not dyadic")

    print("divauction_py smoke test ok:", rep)


if __name__ == "__main__":
    main()
