"""Fixed Gaussian-mixture stand-ins for non-Gaussian primitive distributions.

The parameters were fitted offline by least squares on the cumulative
distribution function and are shipped as constants so runs are reproducible.
"""
from .ast import GmLiteral


def _symmetric_uniform() -> GmLiteral:
    # five components placed symmetrically around 0.5 so the mean is exact
    w_out, w_in = 0.08830343, 0.19125186
    w_mid = 1.0 - 2.0 * (w_out + w_in)
    d_out, d_in = 0.43753205, 0.29513881
    s_out, s_in, s_mid = 0.04162291, 0.09625869, 0.17096639
    return GmLiteral(
        (w_out, w_in, w_mid, w_in, w_out),
        (0.5 - d_out, 0.5 - d_in, 0.5, 0.5 + d_in, 0.5 + d_out),
        (s_out, s_in, s_mid, s_in, s_out),
    )


UNIFORM01 = _symmetric_uniform()

# zero-mean scale mixture approximating Laplace(0, 1)
_lw = (0.15613387, 0.51757135)
LAPLACE01 = GmLiteral(
    (_lw[0], _lw[1], 1.0 - _lw[0] - _lw[1]),
    (0.0, 0.0, 0.0),
    (0.33235415, 0.99429872, 2.09622619),
)

_ew = (0.15287711, 0.24136603, 0.28438619, 0.23198579)
EXPONENTIAL1 = GmLiteral(
    _ew + (1.0 - sum(_ew),),
    (0.11482241, 0.37534648, 0.83948801, 1.63268012, 3.01331211),
    (0.07535613, 0.17988806, 0.35210716, 0.65342855, 1.27151405),
)

STANDARD_NORMAL = GmLiteral((1.0,), (0.0,), (1.0,))
