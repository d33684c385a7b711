"""Built-in parameter set from a published panel study of contraceptive
product discussions in Australian general practice.

Eight products (outcomes), an intercept plus 26 patient attribute dummies,
and 162 doctors observed over 16 consultations in the original study.
The numbers below are that study's reported posterior means: they make a
realistic ground truth for simulation exercises at full or reduced scale.
"""

from __future__ import annotations

import numpy as np

from .corr import CorrelationMatrix, CovarianceMatrix, vech_to_matrix
from .data import CodebookSpec

__all__ = [
    "GP_STUDY_CODEBOOK",
    "GP_STUDY_DIMS",
    "gp_study_parameters",
]

# Full-study dimensions (simulations may use any P, T).
GP_STUDY_DIMS = {"n_outcomes": 8, "n_ind": 162, "n_per": 16, "n_cov": 27}

GP_STUDY_CODEBOOK = CodebookSpec(attributes=(
    ("age", ("dagegp1", "dagegp2", "dagegp3", "dagegp4"), "dagegp2"),
    ("rfe", ("drfe1", "drfe2", "drfe3", "drfe4"), "drfe1"),
    ("bleed", ("dbleed1", "dbleed2", "dbleed3"), "dbleed3"),
    ("bp", ("dbp1", "dbp2", "dbp3"), "dbp2"),
    ("rel", ("drel1", "drel2", "drel3", "drel4"), "drel2"),
    ("child", ("dchild1", "dchild2", "dchild3"), "dchild3"),
    ("fut", ("dfut1", "dfut2", "dfut3", "dfut4"), "dfut3"),
    ("pil", ("dpil1", "dpil2", "dpil3"), "dpil2"),
    ("wt", ("dwt1", "dwt2"), "dwt2"),
    ("comp", ("dcomp1", "dcomp2"), "dcomp1"),
    ("pay", ("dpay1", "dpay2", "dpay3"), "dpay1"),
    ("smk", ("dsmk1", "dsmk2", "dsmk3"), "dsmk1"),
))

# Coefficient posterior means, one row per covariate (intercept first, then
# the codebook's dummy order), one column per product.
_BETA_ROWS = np.array([
    [1.4026, -1.2448, -0.3887, 1.1099, -2.4041, -0.1309, -1.7113, 0.6777],
    [0.1974, -0.1334, 0.0110, 0.0752, -0.5025, -0.0202, -0.2892, 0.0644],
    [-0.1309, 0.0614, -0.0620, -0.0003, 0.3161, -0.0032, 0.0857, 0.0109],
    [-0.3881, 0.1814, -0.2384, -0.1042, 0.8045, -0.0268, 0.3775, 0.0017],
    [-0.0430, 0.0008, -0.0372, -0.0140, 0.0434, -0.0189, -0.0471, 0.0070],
    [-0.2479, -0.0529, 0.0285, 0.0762, 0.0914, 0.1058, -0.0275, 0.1353],
    [-0.0199, 0.1012, -0.0094, 0.0513, 0.0666, 0.0723, -0.0719, 0.0054],
    [0.0500, -0.1327, 0.0604, -0.0887, 0.3982, -0.0249, -0.5218, -0.2285],
    [0.0163, -0.0748, 0.0217, -0.0227, 0.0068, 0.0397, -0.0821, -0.0248],
    [-0.0591, 0.0000, -0.0303, 0.0288, 0.0034, 0.0306, -0.0235, -0.1427],
    [-0.9902, 0.2436, 0.0060, 0.0128, 0.2350, -0.2954, 0.2541, 0.0355],
    [0.0426, -0.0107, -0.0933, -0.0022, 0.1565, 0.0293, 0.0290, -0.3945],
    [-0.0144, 0.0272, -0.0206, 0.0004, -0.0261, 0.0086, -0.0185, 0.0190],
    [-0.0916, 0.0869, 0.0691, -0.0006, -0.0094, 0.0285, 0.0033, -0.2036],
    [-1.7332, 1.3001, -0.0078, -0.0903, 0.9163, -0.9867, 0.5286, -0.0371],
    [-0.0462, 0.0350, -0.0626, -0.0410, 0.9787, -0.0504, 0.5930, -0.0539],
    [-0.3189, -0.0043, 0.1956, 0.0249, 0.6284, -0.0775, 0.2036, -0.1144],
    [-0.2846, 0.1912, -0.2151, -0.1990, -0.0067, 0.0366, -0.1458, 0.0115],
    [-0.3581, 0.0496, 0.0475, 0.0106, 0.2882, 0.0059, 0.0128, 0.0312],
    [0.4713, 0.3618, -0.0934, -0.2596, -0.0112, -0.0316, -0.0441, -0.0278],
    [-0.1822, -0.2448, 0.0300, 0.0612, 0.0552, 0.0351, 0.0469, 0.0816],
    [0.0815, 0.0368, -0.2582, -0.0616, 0.0318, 0.0640, -0.0127, 0.0833],
    [-0.3389, -0.1969, 0.2133, 0.0628, 0.2300, -0.0034, 0.3100, -0.0164],
    [-0.0245, -0.0540, -0.0202, -0.0029, 0.0080, 0.0603, 0.0072, 0.0075],
    [0.0321, -0.0631, -0.0683, -0.0167, -0.0365, 0.2909, -0.0173, -0.0046],
    [-0.2666, -0.0118, -0.0266, -0.0129, -0.0038, 0.0422, 0.0867, 0.0308],
    [-0.5183, -0.0143, 0.0125, 0.0248, 0.0144, -0.0531, 0.0461, 0.0332],
])

# Error correlation entries, row-major lower triangle: (2,1), (3,1), (3,2),
# (4,1), ..., (8,7) in 1-based row/column order.
_R_EPS_VECH = np.array([
    -0.1157,
    -0.0502, 0.1617,
    -0.0481, 0.0454, 0.5891,
    -0.2354, -0.0255, 0.1759, 0.2424,
    0.4721, -0.2702, 0.0144, 0.0358, -0.0695,
    -0.2054, -0.0540, 0.1849, 0.1877, 0.5185, -0.0051,
    -0.0196, -0.0491, 0.0205, 0.1044, -0.0788, 0.1841, 0.2046,
])

_SIGMA_ALPHA_DIAG = np.array(
    [0.5147, 0.6492, 1.3021, 1.5329, 1.0586, 1.4533, 1.9449, 1.2432]
)

_SIGMA_ALPHA_VECH = np.array([
    0.3009,
    0.2733, 0.3026,
    0.2481, 0.2659, 0.2525,
    0.0764, 0.1866, -0.0177, 0.5141,
    0.2012, 0.2195, 0.1101, 0.2469, 0.2856,
    0.0611, 0.2400, 0.2573, -0.2164, 0.0148, 0.2915,
    0.2570, 0.3344, 0.0750, 0.2315, 0.2537, 0.4904, 0.4139,
])


def gp_study_parameters() -> dict:
    """Ground-truth parameter bundle for study-scale simulations.

    Returns beta (8, 27) outcome-major, the error CorrelationMatrix, the
    random-effect CovarianceMatrix, labels, and the attribute codebook.
    Both matrices are validated positive definite on construction.
    """
    low = vech_to_matrix(_R_EPS_VECH, 8)
    r_eps = low + low.T - np.eye(8)
    low = vech_to_matrix(_SIGMA_ALPHA_VECH, 8)
    sigma_alpha = low + low.T - np.eye(8)
    np.fill_diagonal(sigma_alpha, _SIGMA_ALPHA_DIAG)
    labels = GP_STUDY_CODEBOOK.covariate_labels
    return {
        "beta": _BETA_ROWS.T.copy(),
        "r_eps": CorrelationMatrix(r_eps),
        "sigma_alpha": CovarianceMatrix(sigma_alpha),
        "covariate_labels": labels,
        "outcome_labels": tuple(f"y{d + 1}" for d in range(8)),
        "codebook": GP_STUDY_CODEBOOK,
    }
