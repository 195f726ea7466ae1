"""Quick end-to-end check of the crosspoint extension module.

Build and install first:  pip install --no-build-isolation crates/python
"""

import crosspoint as cp

a = cp.covariance_matrix(10, 1.0)
b = [1.0] * 10

res = cp.solve(a, b, epsilon=1e-4)
assert res["converged"], res
x = cp.direct_solve(a, b)
err = max(abs(p - q) for p, q in zip(res["x"], x))
assert err < 1e-3, err

bound = cp.time_bound(a, b, epsilon=1e-4)
rep = cp.spectral_report(a)
print(f"tau = {res['tau']:.3e} s  bound = {bound:.3e} s  lambda_M,min = {rep['lambda_m_min']:.4f}")

cg = cp.conjugate_gradient(a, b, tol=1e-10)
print(f"cg iterations = {cg['iterations']}")

out = cp.run_experiment('scenario = "transient"\nseed = 42\n')
print("\n".join(out["summary"]))
print("smoke test ok")
