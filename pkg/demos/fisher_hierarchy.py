"""Quantum Fisher information with and without postselection.

Discarding the rejected trials can never raise the information above the
value obtained by keeping every system outcome, but the optimal
postselected QFI can exceed the standard (system-traced) QFI by the factor
<A^2>/<A>^2.  This script prints the three numbers for a few preselections.
"""
import numpy as np

from wvalab import fock
from wvalab import metrology as M
from wvalab.protocol import SystemState, sigma_z

DIM = 128
q, p = fock.quadrature_ops(DIM)
vac = fock.vacuum(DIM)

print("  <sigma_z>    f_post_max    f_std    ratio   f_all (numeric)")
for angle in (0.0, np.pi / 8, np.pi / 5, np.pi / 4 - 0.05):
    pre = SystemState(np.array([np.cos(angle), np.sin(angle)]))
    cfg = M.SnrConfig(1e-5, 1, pre, sigma_z(), vac, q, p)
    rep = M.qfi_report(cfg, M.qfi_optimal_weak_value(pre, sigma_z()))
    mean = sigma_z().mean(pre)
    print(f"  {mean:9.4f}  {rep.f_post_max:11.5f}  {rep.f_std:7.4f}  {rep.ratio:7.3f}  {rep.f_all_probe:11.5f}")
