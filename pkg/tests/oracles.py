"""Independent oracles shared by the unit and acceptance tests."""
from fractions import Fraction

from pdcouple.coupling import TransportPlan


def exact_output_law(mu, nu):
    """Exact law of f(M; a, b) and P[output != M] for M ~ mu, a, b ~ U(0,1).

    The unit square is cut where the map can change: a at nu(m)/mu(m) and b
    at the plan's z-table.  On each cell the map is constant, so it is
    evaluated at the cell midpoint and weighted by the cell area.
    """
    plan = TransportPlan(mu, nu)
    cuts_b = sorted({Fraction(0), Fraction(1), *[z for z in plan.z if 0 < z < 1]})
    out = [Fraction(0)] * len(mu)
    moved = Fraction(0)
    for m, pm in enumerate(mu, 1):
        if pm == 0:
            continue
        ka = min(Fraction(1), nu[m - 1] / pm)
        cuts_a = sorted({Fraction(0), ka, Fraction(1)})
        for a0, a1 in zip(cuts_a, cuts_a[1:]):
            a = (a0 + a1) / 2
            for b0, b1 in zip(cuts_b, cuts_b[1:]):
                w = pm * (a1 - a0) * (b1 - b0)
                i = plan.apply(m, a, (b0 + b1) / 2)
                out[i - 1] += w
                if i != m:
                    moved += w
    return out, moved, plan.dtv
