"""Lattice rate of a displaced uniform cube against the sharp-edge estimate and the
exact finite-cube integral, as a function of side length in units of a."""
import argparse

from collapselab import csl_model as C


def cube_rate(side: float, rho: float, params: C.CslParameters) -> float:
    a = params.a
    gap = side + 2 * C.TRUNCATE * a
    lat = C.LatticeMassDistribution.empty((0, 0, 0), (2 * side + gap, side, side), a / 2)
    c1 = lat.with_box((0, 0, 0), (side, side, side), rho)
    c2 = lat.with_box((side + gap, 0, 0), (2 * side + gap, side, side), rho)
    return C.offdiag_decay_rate(c1, c2, params)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=1e25, help="number density in 1/cm^3")
    args = ap.parse_args()
    p = C.CslParameters()
    print("side/a, lattice/sharp_edge, lattice/finite_cube")
    for k in (2, 5, 10, 20, 40):
        side = k * p.a
        rate = cube_rate(side, args.density, p)
        sharp = C.extended_object_rate(args.density, side**3, p)
        exact = C.uniform_cube_rate(args.density, side, p)
        print(f"{k}, {rate / sharp:.4f}, {rate / exact:.4f}")


if __name__ == "__main__":
    main()
