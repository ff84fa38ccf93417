"""Write the small named model files shipped in fixtures/."""

from pathlib import Path

import numpy as np

from covheat.bundle import make_bundle
from covheat.fixtures import random_unitary, rotation, single_vertex_graph, two_vertex_graph
from covheat.graph import cycle_graph
from covheat.io import Model, write_model

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def main():
    OUT.mkdir(exist_ok=True)
    g2 = two_vertex_graph()
    write_model(Model(g2, make_bundle(g2, 1), {"f0": np.array([[1.0], [0.0]])}),
                OUT / "g2.json")

    g1 = single_vertex_graph()
    spin = make_bundle(g1, 2, None, {"o": np.diag([1.0, -1.0])})
    write_model(Model(g1, spin, {"ones": np.ones((1, 2))}), OUT / "spin.json")

    rot = make_bundle(g2, 2, {("a", "b"): rotation(np.pi / 4)}, {"a": np.diag([1.0, -1.0])})
    write_model(Model(g2, rot, {"e1": np.array([[1.0, 0.0], [0.0, 0.0]]), "mix": np.array([[1.0, 0.5j], [-0.5, 1.0]])}),
                OUT / "g2_rotation.json")

    rng = np.random.default_rng(5)
    c5 = cycle_graph(5)
    conn = {(c5.vertices[i], c5.vertices[j]): random_unitary(rng, 2) for i, j, _ in c5.edges()}
    pot = {x: np.diag(rng.uniform(-1.0, 1.0, 2)) for x in c5.vertices}
    f = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    h = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    write_model(Model(c5, make_bundle(c5, 2, conn, pot), {"f": f, "h": h}), OUT / "cycle5_rank2.json")


if __name__ == "__main__":
    main()
