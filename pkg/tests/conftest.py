"""Shared fixtures: the 20-instance corpus (six domains, three source
families plus two variants) solved once per session at h = 1/256."""

import pytest

import symstab as ss
from symstab.audit import audit_solution
from symstab.rearrangement import quantitative_hl_deficit

H_CORPUS = 1.0 / 256.0


def _bump(cx, cy, sigma):
    def f(x, y):
        return 1.0 + ((x - cx) ** 2 + (y - cy) ** 2 < sigma ** 2) / sigma
    return f


def _quad(x, y):
    return 1.0 + x * x


DOMAINS = {
    "disk": (ss.DomainSpec.disk((0.0, 0.0), 1.0), (0.5, 0.0)),
    "square": (ss.DomainSpec.polygon([(0, 0), (1, 0), (1, 1), (0, 1)]),
               (0.3, 0.3)),
    "rect2x05": (ss.DomainSpec.polygon([(0, 0), (2, 0), (2, 0.5), (0, 0.5)]),
                 (0.5, 0.25)),
    "rect4x1": (ss.DomainSpec.polygon([(0, 0), (4, 0), (4, 1), (0, 1)]),
                (1.0, 0.5)),
    "lshape": (ss.DomainSpec.polygon([(0, 0), (1, 0), (1, 0.5), (0.5, 0.5),
                                      (0.5, 1), (0, 1)]), (0.25, 0.25)),
    "twodisk": (ss.DomainSpec.union(ss.DomainSpec.disk((-0.55, 0.0), 0.5),
                                    ss.DomainSpec.disk((0.55, 0.0), 0.5)),
                (-0.55, 0.0)),
}


def corpus_specs():
    items = []
    for name, (spec, bump_c) in DOMAINS.items():
        items.append((f"{name}-const", spec, 1.0))
        items.append((f"{name}-quad", spec, _quad))
        items.append((f"{name}-bump", spec, _bump(*bump_c, 0.1)))
    items.append(("disk-bump005", DOMAINS["disk"][0],
                  _bump(0.5, 0.0, 0.05)))
    items.append(("square-quadxy", DOMAINS["square"][0],
                  lambda x, y: 1.0 + x * x + y * y))
    assert len(items) == 20
    return items


def solve_instance(spec, f, h, preconditioner="amg"):
    dom = ss.rasterize(spec, h)
    if callable(f):
        field = ss.ScalarField.from_function(dom, f, nonnegative=True)
    else:
        field = ss.ScalarField.constant(dom, float(f))
    problem = ss.PoissonProblem(dom, field)
    u = ss.solve_dirichlet(problem, preconditioner=preconditioner)
    sol = ss.radial_solution(ss.decreasing_rearrangement(field),
                             ss.measure(dom))
    return problem, u, sol


@pytest.fixture(scope="session")
def solved_corpus():
    out = []
    for name, spec, f in corpus_specs():
        problem, u, sol = solve_instance(spec, f, H_CORPUS)
        report = audit_solution(problem, u,
                                do_superlevel=False, do_section4=False,
                                instance={"name": name, "h": H_CORPUS})
        out.append({"name": name, "spec": spec, "problem": problem,
                    "u": u, "sol": sol, "report": report})
    return out


@pytest.fixture(scope="session")
def corpus_hl(solved_corpus):
    return [(rec["name"],
             quantitative_hl_deficit(rec["u"], rec["problem"].source,
                                     2.0, 1.0))
            for rec in solved_corpus]
