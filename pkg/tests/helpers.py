"""Random instance generators shared by the test modules."""

import random
from fractions import Fraction

from cubecomb.bitspace import CubeDomain, PartialPattern, SubsetC
from cubecomb.distrib import BlockProduct, Distribution


def random_subset(rng: random.Random, width: int, p: float = 0.6) -> SubsetC:
    dom = CubeDomain(width)
    return SubsetC.from_points(dom, [x for x in dom.points() if rng.random() < p])


def random_pattern(rng: random.Random, domain: CubeDomain, size: int) -> PartialPattern:
    pts = rng.sample(range(domain.size), size)
    return PartialPattern.from_mapping(domain, {p: rng.randint(0, 1) for p in pts})


def random_distribution(rng: random.Random, ground, scale: int = 4) -> Distribution:
    """Weights ``j / (scale * |ground|)`` with ``j <= scale``: within the cap."""
    ground = tuple(ground)
    n = len(ground)
    return Distribution(ground, tuple(Fraction(rng.randint(0, scale), scale * n) for _ in ground))


def random_product(rng: random.Random, nblocks: int, max_width: int = 3, p: float = 0.7) -> BlockProduct:
    sets = []
    for _ in range(nblocks):
        w = rng.randint(1, max_width)
        C = random_subset(rng, w, p)
        if not C.points():
            C = SubsetC.from_points(C.domain, [0])
        sets.append(C)
    return BlockProduct(tuple(sets))


def extend_randomly(rng: random.Random, f: PartialPattern, p: float = 0.6) -> PartialPattern:
    free = [x for x in f.domain.points() if x not in set(f.points)]
    if free and rng.random() < p:
        return f.extend([(rng.choice(free), rng.randint(0, 1))])
    return f


def identity_instances(seed: int, count: int):
    """Yield ``(m, product, F, G, N0, t)`` with ``(C)^F`` and ``(C)^G`` nonempty."""
    rng = random.Random(seed)
    made = 0
    while made < count:
        nb = rng.choice([2, 3])
        product = random_product(rng, nb, max_width=3, p=0.75)
        m = random_distribution(rng, range(1 << sum(product.widths)), scale=6)
        F = [random_pattern(rng, C.domain, rng.randint(0, 1)) for C in product.sets]
        if not product.pattern_set(F):
            continue
        G = [extend_randomly(rng, f) for f in F]
        if not product.pattern_set(G):
            continue
        N0 = rng.randint(1, nb - 1)
        t = rng.choice(product.pattern_set(F, 0, N0))
        made += 1
        yield m, product, F, G, N0, t


def identity_checks(m, product, F, G, N0, t):
    """Every applicable identity on one instance (skipping empty tail sets)."""
    from cubecomb import distrib as D

    out = []
    G_tail = list(F[:N0]) + list(G[N0:])
    if product.pattern_set(G_tail, N0):
        out.append(D.check_slice_restriction(m, product, F, G_tail, N0, t))
    out.append(D.check_slice_mass_bound(m, product, F, N0, t))
    last = product.nblocks - 1
    G_last = list(F[:last]) + [G[last]]
    if product.block_points(G_last, last):
        out.append(D.check_marginal_restriction(m, product, F, G_last))
    G_head = list(G[:N0]) + list(F[N0:])
    common = set(product.pattern_set(F, 0, N0)) & set(product.pattern_set(G_head, 0, N0))
    if common:
        out.append(D.check_slice_scale_invariance(m, product, F, G_head, N0, min(common)))
    out.append(D.check_total_decomposition(m, product, F, G))
    return out


def tower_chain(rng: random.Random):
    n = 1 << rng.randint(1, 6)
    m = random_distribution(rng, range(n), scale=5)
    Y = sorted(rng.sample(range(n), rng.randint(1, n)))
    Z = sorted(rng.sample(Y, rng.randint(1, len(Y))))
    return m, Y, Z


def toy_level(seed: int):
    """A width-3 level with major 1/2, minor 1/8 and a toy step table."""
    from cubecomb import refine as R
    from cubecomb.params import Cascade

    cas = Cascade([Fraction(1, 4), Fraction(1, 2)], [1, Fraction(1, 8)], [0, 3], m=[0, 8], delta=[1, Fraction(1, 16)])
    r = random.Random(seed)
    dom = CubeDomain(3)
    C = SubsetC.from_points(dom, [x for x in range(8) if r.random() < 0.5])
    table = r.choice([[0, 1], [0, 1, 1, 2], [0, 0, 1]])
    ctx = R.LevelContext.from_cascade(cas, 1, C, sbar_table=table, u=1, m_cap=8)
    m = Distribution(tuple(range(8)), tuple(Fraction(r.choice([0, 1, 4, 4]), 32) for _ in range(8)))
    return ctx, m, r.randint(2, 5)


def formula_cascade(widths):
    """Step functions from the formulas; small caps so budgets stay legal."""
    from cubecomb.params import Cascade

    L = len(widths)
    major = [Fraction(1, 2 ** (i + 2)) for i in range(L + 2)]
    minor = [Fraction(1)] + [Fraction(1, 2 ** (i + 6)) for i in range(1, L + 2)]
    return Cascade(
        major,
        minor,
        [0] + list(widths) + [1],
        m=[0] + [3] * (L + 1),
        delta=[1] + [Fraction(1, 2 ** (2 * i + 4)) for i in range(1, L + 2)],
    )


def product_instance(seed: int, nblocks: int, n_refined: int):
    """A random in-regime product problem meeting the mass precondition, or None."""
    from cubecomb import refine as R
    from cubecomb.refine import mass_threshold

    rng = random.Random(seed)
    product = random_product(rng, nblocks, max_width=3, p=0.75)
    cas = formula_cascade(product.widths)
    levels = tuple(R.LevelContext.from_cascade(cas, j + 1, C) for j, C in enumerate(product.sets))
    F = [random_pattern(rng, C.domain, rng.randint(0, 1)) for C in product.sets]
    h0 = [rng.randint(0, 2) for _ in product.sets]
    N0 = nblocks - n_refined
    m = random_distribution(rng, range(1 << sum(product.widths)), scale=2)
    eps_beyond = cas.eps_minor[nblocks + 1]
    need = mass_threshold([lv.eps_minor for lv in levels[N0:]] + [eps_beyond])
    if not product.pattern_set(F) or restricted_total_on(m, product, F) < need:
        return None
    return m, product, F, h0, N0, levels, eps_beyond


def restricted_total_on(m, product, F):
    from cubecomb.distrib import restricted_total

    return restricted_total(m, product.pattern_set(F))


def random_tree(rng: random.Random, widths, p: float = 0.5):
    from cubecomb.norms import BlockTree

    size = 1 << sum(widths)
    leaves = [x for x in range(size) if rng.random() < p] or [rng.randrange(size)]
    return BlockTree(tuple(widths), tuple(leaves))


def tree_instance(rng: random.Random):
    """A random tree over a random product with nonempty unrefined pattern sets."""
    depth = rng.randint(1, 4)
    while True:
        product = random_product(rng, depth, max_width=3, p=0.7)
        F = [random_pattern(rng, C.domain, rng.randint(0, 1)) for C in product.sets]
        if all(product.pattern_set(F, i, i + 1) for i in range(depth)):
            return product, F, random_tree(rng, product.widths, rng.choice([0.3, 0.6, 0.9]))
