"""Smoke test for the agpsr_py extension.

Build with `maturin develop -m crates/python/Cargo.toml`, or
`cargo build -p agpsr-python --release` and put target/release/libagpsr_py.so
on PYTHONPATH as agpsr_py.so.
"""
import math

import agpsr_py as ap

X = [[0.0, 1.0], [1.0, 0.0]]
Z = [[1.0, 0.0], [0.0, -1.0]]

p = ap.Problem.from_matrices(X, cost_re=Z)
assert p.n_qubits == 1
assert all(abs(g - 2.0) < 1e-12 for g in p.gaps())

psr = ap.ShiftRule("psr", p.gaps())
assert psr.expectation_calls == 2
for x in (0.0, 0.4, 1.3):
    assert abs(psr.estimate(p, x) - p.derivative(x)) < 1e-12
    assert abs(p.derivative(x) + math.sin(x)) < 1e-12

# Plain callables work too.
assert abs(psr.estimate(lambda t: math.cos(t), 0.7) + math.sin(0.7)) < 1e-12

chain = ap.Problem.neutral_atom(3, regime="weak", state_seed=5)
gpsr = ap.ShiftRule("gpsr", chain.gaps())
x = 0.37
assert abs(gpsr.estimate(chain, x) - chain.derivative(x)) < 1e-8

approx = ap.ShiftRule.agpsr(4, 4.0)
rel = abs(approx.estimate(chain, x) - chain.derivative(x)) / abs(chain.derivative(x))
assert rel < 0.05, rel

noisy = psr.estimate(p, 0.4, shots=1000, seed=1)
assert abs(noisy - p.derivative(0.4)) < 0.3

q = ap.error_function([1.0], [math.pi / 2], [1.0, 0.5])
assert abs(q[0]) < 1e-12 and abs(q[1]) > 1e-3

g = ap.g_objective([1.0, 2.0], [0.5, 1.2])
rep = ap.optimize_shifts([1.0, 2.0], [0.5, 1.2])
assert rep["optimal_g"] <= g + 1e-12

try:
    ap.ShiftRule("gpsr", [1.0, 2.0], [math.pi, 2 * math.pi])
except ap.AgpsrError:
    pass
else:
    raise AssertionError("singular shift rule accepted")

rows = ap.scaling_study({"n_min": 2, "n_max": 3})
assert [r["total_gaps"] for r in rows] == [6, 28]

vqe = ap.run_vqe({"n_qubits": 3, "ansatz": {"type": "digital", "layers": 3}, "diff_method": {"type": "gpsr"}, "runs": 1, "iterations": 5, "seed": 2})
assert len(vqe["traces"]) == 1

print("agpsr_py smoke test: ok")
