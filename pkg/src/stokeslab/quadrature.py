"""Numerical integration on the reference triangle and the unit interval.

Triangle rules are tabulated symmetric rules on the reference triangle with
vertices (0,0), (1,0), (0,1).  Weights are given in the reference measure,
i.e. they sum to 1/2; integration over a physical cell T multiplies by
``2 * area(T)``.  Edge rules are Gauss rules on [0,1] with weights summing
to one.
"""

from functools import lru_cache

import numpy as np

# Orbit encodings in barycentric coordinates (l1, l2, l3), point = (l2, l3):
#   ("S3", w)          -> centroid
#   ("S21", w, a)      -> permutations of (a, a, 1-2a)
#   ("S111", w, a, b)  -> permutations of (a, b, 1-a-b)
# Orbit weights are normalized to sum to 1 over the rule.
_TRIANGLE_ORBITS = {
    1: [
        ("S3", 1.0),
    ],
    2: [
        ("S21", 1.0 / 3.0, 1.0 / 6.0),
    ],
    4: [
        ("S21", 0.223381589678011, 0.445948490915965),
        ("S21", 0.109951743655322, 0.091576213509771),
    ],
    5: [
        ("S3", 0.225),
        ("S21", 0.132394152788506, 0.470142064105115),
        ("S21", 0.125939180544827, 0.101286507323456),
    ],
    6: [
        ("S21", 0.11678627572637645, 0.24928674517091207),
        ("S21", 0.050844906370206319, 0.063089014491501894),
        ("S111", 0.082851075618375292, 0.31035245103378306, 0.053145049844818174),
    ],
    8: [
        ("S3", 0.14431560767777174),
        ("S21", 0.095091634267294181, 0.45929258829271402),
        ("S21", 0.10321737053471934, 0.17056930775175061),
        ("S21", 0.032458497623199238, 0.050547228317031359),
        ("S111", 0.027230314174431655, 0.26311282963466642, 0.0083947774099448567),
    ],
    10: [
        ("S3", 0.090817990382755093),
        ("S21", 0.036725957756467129, 0.48557763338365678),
        ("S21", 0.04532105943552979, 0.10948157548503597),
        ("S111", 0.072757916845422183, 0.14170721941487727, 0.30793983876411912),
        ("S111", 0.028327242531054637, 0.025003534762680503, 0.24667256063990156),
        ("S111", 0.0094216669637322056, 0.0095408154003007277, 0.066803251012196141),
    ],
}

# Degree-12 rule: conical-product Gauss base grid, symmetrized over the six
# barycentric permutations at load time (pure index arithmetic, no solves).
# Columns: x, y, weight; weights sum to 1/2.
_CONICAL_12_BASE = [
    (0.022479386438712501, 0.024874032376060829, 0.0036234660797257816),
    (0.022479386438712501, 0.12632929701966925, 0.0078271866484950665),
    (0.022479386438712501, 0.29039930608799031, 0.010685010601314927),
    (0.022479386438712501, 0.48876030678064375, 0.011696036764419309),
    (0.022479386438712501, 0.68712130747329714, 0.010685010601314927),
    (0.022479386438712501, 0.85119131654161828, 0.0078271866484950665),
    (0.022479386438712501, 0.95264658118522672, 0.0036234660797257816),
    (0.11467905316090415, 0.02252791561566371, 0.0071546437790961414),
    (0.11467905316090415, 0.11441392774676132, 0.015455017662734034),
    (0.11467905316090415, 0.26300886657580119, 0.021097877818152391),
    (0.11467905316090415, 0.44266047341954795, 0.023094179670909248),
    (0.11467905316090415, 0.62231208026329465, 0.021097877818152391),
    (0.11467905316090415, 0.77090701909233461, 0.015455017662734034),
    (0.11467905316090415, 0.86279303122343221, 0.0071546437790961414),
    (0.26578982278458951, 0.018682744348842789, 0.008247603013529602),
    (0.26578982278458951, 0.094885217012862816, 0.017815960400675818),
    (0.26578982278458951, 0.21811726835029829, 0.02432083637489714),
    (0.26578982278458951, 0.36710508860770524, 0.026622097721383381),
    (0.26578982278458951, 0.51609290886511217, 0.02432083637489714),
    (0.26578982278458951, 0.6393249602025477, 0.017815960400675818),
    (0.26578982278458951, 0.71552743286656773, 0.008247603013529602),
    (0.45284637366944464, 0.013922895156596128, 0.0069355427537340945),
    (0.45284637366944464, 0.070711074546325303, 0.014981729219389429),
    (0.45284637366944464, 0.16254699001286968, 0.020451784622509829),
    (0.45284637366944464, 0.27357681316527771, 0.022386952504607083),
    (0.45284637366944464, 0.38460663631768571, 0.020451784622509829),
    (0.45284637366944464, 0.47644255178423012, 0.014981729219389429),
    (0.45284637366944464, 0.53323073117395925, 0.0069355427537340945),
    (0.64737528288683033, 0.0089729040067167316, 0.0042979100879824376),
    (0.64737528288683033, 0.045571246280294943, 0.0092840787568885582),
    (0.64737528288683033, 0.10475684270848173, 0.012673836002092813),
    (0.64737528288683033, 0.17631235855658484, 0.013873046771563943),
    (0.64737528288683033, 0.24786787440468791, 0.012673836002092813),
    (0.64737528288683033, 0.30705347083287471, 0.0092840787568885582),
    (0.64737528288683033, 0.34365181310645293, 0.0042979100879824376),
    (0.81975930826310761, 0.0045864125416378966, 0.0017744850714380535),
    (0.81975930826310761, 0.023293298949989799, 0.0038331325734846846),
    (0.81975930826310761, 0.05354544045728326, 0.0052326671156876321),
    (0.81975930826310761, 0.090120345868446194, 0.0057277872006527416),
    (0.81975930826310761, 0.12669525127960912, 0.0052326671156876321),
    (0.81975930826310761, 0.15694739278690259, 0.0038331325734846846),
    (0.81975930826310761, 0.1756542791952545, 0.0017744850714380535),
    (0.94373743946307787, 0.0014316595813329523, 0.00033759075671137452),
    (0.94373743946307787, 0.0072710586585602805, 0.00072924261065156399),
    (0.94373743946307787, 0.016714336569467501, 0.0009955000916249642),
    (0.94373743946307787, 0.028131280268461067, 0.0010896952848315847),
    (0.94373743946307787, 0.039548223967454631, 0.0009955000916249642),
    (0.94373743946307787, 0.048991501878361855, 0.00072924261065156399),
    (0.94373743946307787, 0.054830900955589179, 0.00033759075671137452),
]

MAX_TRIANGLE_DEGREE = 12


def _expand_orbits(orbits):
    pts, wts = [], []
    for orbit in orbits:
        kind, w = orbit[0], orbit[1]
        if kind == "S3":
            bary = [(1 / 3, 1 / 3, 1 / 3)]
        elif kind == "S21":
            a = orbit[2]
            c = 1.0 - 2.0 * a
            bary = [(a, a, c), (a, c, a), (c, a, a)]
        else:
            a, b = orbit[2], orbit[3]
            c = 1.0 - a - b
            bary = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
        for l1, l2, l3 in bary:
            pts.append((l2, l3))
            wts.append(w)
    return np.asarray(pts), np.asarray(wts) * 0.5


def _symmetrized_conical():
    base = np.asarray(_CONICAL_12_BASE)
    l2, l3 = base[:, 0], base[:, 1]
    l1 = 1.0 - l2 - l3
    lam = np.stack([l1, l2, l3])
    pts, wts = [], []
    for perm in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]:
        pts.append(np.stack([lam[perm[1]], lam[perm[2]]], axis=1))
        wts.append(base[:, 2] / 6.0)
    return np.concatenate(pts), np.concatenate(wts)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Quadrature rule on the reference triangle exact to (at least) `degree`.

    Returns (points, weights): points (n, 2) strictly inside the triangle,
    weights (n,) positive, summing to 1/2.  Requested degrees between shipped
    tables are routed up to the next exact rule.

    Raises ValueError for degree < 1 or degree > MAX_TRIANGLE_DEGREE.
    """
    if degree < 1 or degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(
            f"no tabulated triangle rule for degree {degree}; "
            f"supported range is 1..{MAX_TRIANGLE_DEGREE}"
        )
    shipped = sorted(_TRIANGLE_ORBITS)
    for d in shipped:
        if d >= degree:
            pts, wts = _expand_orbits(_TRIANGLE_ORBITS[d])
            break
    else:
        pts, wts = _symmetrized_conical()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def edge_rule(degree):
    """Gauss rule on [0,1] exact for polynomials up to `degree`.

    Returns (points, weights), weights summing to one.
    """
    if degree < 0:
        raise ValueError(f"invalid edge rule degree {degree}")
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (x + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts
