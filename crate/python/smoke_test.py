"""Quick end-to-end check of the Python bindings.

Build and install first, e.g.
    maturin build --release -m crates/python/Cargo.toml -o target/wheels
    pip install target/wheels/repscatter-*.whl
"""

import cmath
import json
import math
import tempfile
from pathlib import Path

import repscatter as rs


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []

    # thermal reservoir: the fixed point is the reservoir state itself
    sigma = rs.DensityMatrix.thermal(1.0, 40)
    traj = rs.iterate_to_fixed_point(rs.DensityMatrix.fock(3, 40), sigma, 0.7)
    d = traj.final_state().trace_distance(sigma)
    results.append(check("return to equilibrium", traj.converged_at is not None and d < 1e-7, f"d={d:.2e}"))

    # one collision conserves trace and balances photon number
    params = rs.ChannelParams(0.5, 30)
    rho = rs.DensityMatrix.fock(2, 30)
    out = rs.CollisionChannel(rs.DensityMatrix.fock(1, 30), params).apply(rho)
    expect = params.cos**2 * 2 + params.sin**2 * 1
    results.append(check("photon balance", abs(out.mean_photon_number() - expect) < 1e-10))

    # fixed point against the infinite product over the reservoir
    fock1 = rs.DensityMatrix.fock(1, 40)
    fp = rs.iterate_to_fixed_point(rs.DensityMatrix.fock(0, 40), fock1, 0.5).final_state()
    chi = rs.CharFn.of_state(fp)
    params = rs.ChannelParams(0.5, 40)
    worst = max(abs(chi(z) - rs.asymptotic_product(rs.CharFn.fock(1), params, z)[0]) for z in rs.z_grid())
    results.append(check("product formula", worst < 1e-5, f"max diff={worst:.2e}"))

    # closed form for a Fock reservoir: e^{-|z|^2/2} (s^2|z|^2; c^2)_inf
    z = 0.9 * cmath.exp(0.4j)
    q = 1.0
    for k in range(200):
        q *= 1 - params.sin**2 * abs(z) ** 2 * params.cos ** (2 * k)
    closed = math.exp(-abs(z) ** 2 / 2) * q
    results.append(check("q-Pochhammer", abs(rs.asymptotic_product(rs.CharFn.fock(1), params, z)[0] - closed) < 1e-10))

    # measures of a Fock state and its Gaussian companion
    results.append(check("QCS of fock(1)", abs(fock1.qcs_squared() - 3.0) < 1e-9))
    g = rs.GaussianState.from_moments(rs.DensityMatrix.thermal(math.log(2.0), 40))
    beta = g.thermal_beta()
    results.append(check("thermal match", beta is not None and abs(beta - math.log(2.0)) < 1e-6))

    # scenario runner
    with tempfile.TemporaryDirectory() as tmp:
        config = json.dumps({"scenario": "measures", "sigma_spec": {"fock": 1}, "lambda": [0.8, 0.3]})
        res = json.loads(rs.run_config(config, tmp))
        written = sorted(p.name for p in Path(tmp).iterdir())
        results.append(check("run_config", len(res["points"]) == 2 and "manifest.json" in written, str(written)))

    try:
        rs.ChannelParams(2.0, 10)
        results.append(check("invalid coupling rejected", False))
    except ValueError:
        results.append(check("invalid coupling rejected", True))

    print(f"{sum(results)} of {len(results)} checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
