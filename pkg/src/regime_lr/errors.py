"""Exception hierarchy.

``InputError`` covers bad data and configuration (CLI exit code 2);
``NumericalError`` covers failures inside estimation or simulation
(CLI exit code 3).
"""


class RegimeLRError(Exception):
    pass


class InputError(RegimeLRError, ValueError):
    pass


class NumericalError(RegimeLRError, ArithmeticError):
    pass


class NonstationaryError(InputError):
    def __init__(self, coeffs=None):
        msg = "nonstationary"
        if coeffs is not None:
            msg = f"nonstationary AR coefficients {list(map(float, coeffs))}"
        super().__init__(msg)


class CollinearLagsError(NumericalError):
    def __init__(self, rank: int, ncols: int):
        super().__init__(f"collinear lags: design matrix rank {rank} < {ncols}")


class EmptyFeasibleSetError(NumericalError):
    def __init__(self):
        super().__init__("empty feasible set: no candidate satisfied the parameter constraints")


class NestingError(NumericalError):
    def __init__(self, alpha, value):
        super().__init__(
            f"optimizer failed nesting at alpha={alpha}: LR_T(alpha)={value:.3g} < -1e-6"
        )
