"""Frozen high-precision reference values used across test modules.

The table was computed with 60-digit arithmetic (mpmath) before the
implementation existed; 25 significant figures are retained here.
"""

# ln(Phi(z)) at the acceptance grid
LOG_NCDF_ORACLE = {
    -40.0: -804.6084420137537881666068,
    -30.0: -454.3212439563431971073558,
    -20.0: -203.9171553710972639368045,
    -10.0: -53.23128515051247057834703,
    -5.0: -15.0649983939887257360837,
    -1.0: -1.841021645009263505770783,
    0.0: -0.6931471805599453094172321,
    1.0: -0.1727537790234498895264832,
    5.0: -2.866516129637635933845963e-7,
    8.0: -6.220960574271786058533519e-16,
}
