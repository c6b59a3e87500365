"""Regenerate the bundled toy inputs under src/cubecomb/data."""

import json
import random
from fractions import Fraction
from pathlib import Path

from cubecomb import construct, refine
from cubecomb.bitspace import CubeDomain
from cubecomb.distrib import BlockProduct, Distribution, unrefined
from cubecomb.norms import BlockTree
from cubecomb.params import Cascade, delta_of, load_bundled
from cubecomb.rational import format_rational

DATA = Path(__file__).resolve().parents[1] / "src" / "cubecomb" / "data"
SEED = 7


def level_sets(toy: Cascade, levels):
    """Certified sets at each toy level (m = 1)."""
    out = []
    for N in levels:
        spec = construct.ConstructionSpec(
            CubeDomain(toy.widths[N]), toy.eps_major[N], delta_of(toy, N), 1, SEED, 20
        )
        out.append(construct.construct_certified(spec))
    return out


def main() -> None:
    toy = load_bundled()
    certs = level_sets(toy, range(1, toy.depth + 1))
    (DATA / "toy_level_sets.json").write_text(
        json.dumps([json.loads(c.dumps()) for c in certs], indent=2) + "\n", encoding="utf-8"
    )

    # step functions from the formulas; caps and deltas from the toy file
    cascade = Cascade(toy.eps_major, toy.eps_minor, toy.widths, m=toy.m, delta=toy.delta)
    sets = [c.C for c in certs[:2]]
    levels = tuple(
        refine.LevelContext.from_cascade(cascade, N, C, certified=True) for N, C in zip((1, 2), sets)
    )
    product = BlockProduct(tuple(sets))
    rng = random.Random(SEED)
    size = 1 << sum(product.widths)
    weights = tuple(Fraction(rng.randint(0, 4), 4 * size) for _ in range(size))
    problem = refine.Problem(
        "product", levels, weights, tuple(unrefined(product)), (1, 1), 0, cascade.eps_minor[3]
    )
    (DATA / "toy_product_problem.json").write_text(
        json.dumps({"version": 1, "kind": "refinement_problem", "problem": problem.to_json_dict()}, indent=2) + "\n",
        encoding="utf-8",
    )
    assert Distribution(tuple(range(size)), weights).total <= 1

    widths = (3, 2, 2)
    leaves = [x for x in range(1 << sum(widths)) if rng.random() < 0.85]
    (DATA / "toy_tree.txt").write_text(BlockTree(widths, tuple(leaves)).dumps(), encoding="utf-8")
    tree_sets = [certs[0].C]
    for w in widths[1:]:
        spec = construct.ConstructionSpec(CubeDomain(w), Fraction(1, 4), Fraction(1, 8), 1, SEED, 20)
        tree_sets.append(construct.construct_certified(spec).C)
    norm_problem = {
        "version": 1,
        "kind": "norm_problem",
        "sets": [{"width": C.domain.width, "bitset_hex": C.to_hex()} for C in tree_sets],
        "patterns": [[] for _ in tree_sets],
        "h": [1, 1, 1],
        "N": 0,
    }
    (DATA / "toy_norm_problem.json").write_text(json.dumps(norm_problem, indent=2) + "\n", encoding="utf-8")
    print("eps_beyond", format_rational(cascade.eps_minor[3]))


if __name__ == "__main__":
    main()
