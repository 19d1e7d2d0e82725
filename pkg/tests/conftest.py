import numpy as np
import pytest


@pytest.fixture(scope="session")
def direct_q1_assembly():
    """Independent d=2 assembly oracle: loop cells, 3x3 Gauss quadrature,
    bilinear local basis, interior-node numbering with the first coordinate
    as the slow index."""

    def build(n):
        h = 1.0 / n
        x, w = np.polynomial.legendre.leggauss(3)
        t = (x + 1) / 2
        wt = w / 2
        ndof = (n - 1) ** 2
        A_mass = np.zeros((ndof, ndof))
        A_stiff = np.zeros((ndof, ndof))

        def node_id(i, j):
            if 1 <= i <= n - 1 and 1 <= j <= n - 1:
                return (i - 1) * (n - 1) + (j - 1)
            return None

        corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
        for cx in range(n):
            for cy in range(n):
                ids = [node_id(cx + dx, cy + dy) for dx, dy in corners]
                for g1 in range(3):
                    for g2 in range(3):
                        t1, t2 = t[g1], t[g2]
                        weight = wt[g1] * wt[g2] * h * h
                        vals, grads = [], []
                        for dx, dy in corners:
                            b1 = t1 if dx else 1 - t1
                            b2 = t2 if dy else 1 - t2
                            d1 = (1 if dx else -1) / h
                            d2 = (1 if dy else -1) / h
                            vals.append(b1 * b2)
                            grads.append((d1 * b2, b1 * d2))
                        for a in range(4):
                            if ids[a] is None:
                                continue
                            for b in range(4):
                                if ids[b] is None:
                                    continue
                                A_mass[ids[a], ids[b]] += weight * vals[a] * vals[b]
                                A_stiff[ids[a], ids[b]] += weight * (
                                    grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]
                                )
        return A_mass, A_stiff

    return build
