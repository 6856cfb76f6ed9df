"""Writes the OBJ fixtures used by tests and examples.

cube.obj   -- unit cube centred at the origin, 8 vertices, 12 triangles.
tess_cube.obj -- the same cube with every face split into a 4x4 grid of
              quads (150 vertices, 192 triangles).
chair.obj  -- chair built from six boxes (seat, backrest, four legs); every
              box face is a 3x3 grid of quads, giving 648 triangles.
"""
import itertools


def write(path, verts, faces, header):
    with open(path, "w") as f:
        f.write(f"# {header}\n")
        for v in verts:
            f.write("v {:.6f} {:.6f} {:.6f}\n".format(*v))
        for face in faces:
            f.write("f " + " ".join(str(i + 1) for i in face) + "\n")


def cube():
    verts = [(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)]
    idx = {v: i for i, v in enumerate(verts)}
    faces = []
    for axis in range(3):
        for side in (-0.5, 0.5):
            others = [a for a in range(3) if a != axis]
            corners = []
            for u, w in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]:
                p = [0.0, 0.0, 0.0]
                p[axis] = side
                p[others[0]] = u
                p[others[1]] = w
                corners.append(idx[tuple(p)])
            if side < 0:
                corners.reverse()
            faces.append((corners[0], corners[1], corners[2]))
            faces.append((corners[0], corners[2], corners[3]))
    return verts, faces


def box(lo, hi, n, verts, faces):
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for side in (lo[axis], hi[axis]):
            base = len(verts)
            for j in range(n + 1):
                for i in range(n + 1):
                    p = [0.0, 0.0, 0.0]
                    p[axis] = side
                    a, b = others
                    p[a] = lo[a] + (hi[a] - lo[a]) * i / n
                    p[b] = lo[b] + (hi[b] - lo[b]) * j / n
                    verts.append(tuple(p))
            for j in range(n):
                for i in range(n):
                    q = [base + j * (n + 1) + i, base + j * (n + 1) + i + 1,
                         base + (j + 1) * (n + 1) + i + 1, base + (j + 1) * (n + 1) + i]
                    if side == lo[axis]:
                        q.reverse()
                    faces.append(q)


def chair():
    verts, quads = [], []
    n = 3
    # y points down in the camera convention used by the fixtures; the chair
    # is modelled y-up and flipped on output.
    box((-0.5, 0.0, -0.5), (0.5, 0.1, 0.5), n, verts, quads)          # seat
    box((-0.5, 0.1, 0.4), (0.5, 1.0, 0.5), n, verts, quads)           # backrest
    for x, z in itertools.product((-0.5, 0.4), (-0.5, 0.4)):
        box((x, -0.8, z), (x + 0.1, 0.0, z + 0.1), n, verts, quads)    # legs
    verts = [(x, -y + 0.1, z) for x, y, z in verts]
    return verts, quads


if __name__ == "__main__":
    v, f = cube()
    write("cube.obj", v, f, "unit cube, 8 vertices, 12 triangles")
    v, f = [], []
    box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), 4, v, f)
    write("tess_cube.obj", v, f, "unit cube, 4x4 quad grid per face")
    v, f = chair()
    write("chair.obj", v, f, "chair, six subdivided boxes, quad faces")
