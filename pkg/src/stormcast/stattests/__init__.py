"""Special functions, unit-root and portmanteau tests, cross-correlation."""

from .adf import AdfResult, adf_test, critical_values
from .portmanteau import CcfResult, LjungBoxResult, acf, ccf, ljung_box
from .special import chi_square_sf, f_sf, student_t_sf, two_sided_t_pvalue

__all__ = [
    "AdfResult", "adf_test", "critical_values",
    "CcfResult", "LjungBoxResult", "acf", "ccf", "ljung_box",
    "chi_square_sf", "f_sf", "student_t_sf", "two_sided_t_pvalue",
]
