"""
Clock transitions
=================

Search every dmF = +/-1 branch for df/dB = 0 and df/dA = 0 points, and
look at the doublet structure of the low-field ESR clock transitions.
"""

from clockspin import find_all_cts, get_system, group_doublets
from clockspin.transitions import branch_function

bi = get_system("Si:Bi")

cts = find_all_cts(bi, (0.005, 0.6))
print(f"{'kind':4s} {'B* (mT)':>9s} {'f* (GHz)':>10s} {'d2f/dB2':>9s}  transition")
for ct in cts:
    print(f"{ct.kind:4s} {ct.B_star * 1e3:9.3f} {ct.f_star:10.6f} {ct.curvature:9.2f}  "
          f"{ct.label_i} -> {ct.label_j} ({ct.selection:+d})")

# the ESR clock transitions come in dF*dmF = +1/-1 pairs a fraction of a mT apart
for site in group_doublets([c for c in cts if c.kind == "ESR"]):
    print(f"site at {site.B_mean * 1e3:.1f} mT, splitting {site.splitting * 1e3:.2f} MHz")

# sensitivity to the hyperfine constant stays finite at a field clock transition
ct = next(c for c in cts if c.selection == 1 and abs(c.B_star - 0.08) < 1e-3)
dfdA = branch_function(bi, ct.key, "dfdA")(ct.B_star)
print(f"df/dA at {ct.B_star * 1e3:.2f} mT: {dfdA:.3f}")

# df/dA = 0 points are a separate family
for ct in find_all_cts(bi, (0.005, 0.6), quantity="dfdA"):
    print(f"df/dA = 0  {ct.kind:4s} {ct.B_star * 1e3:8.3f} mT  {ct.f_star:8.4f} GHz")

# phosphorus has no ESR clock transition at these fields
print("Si:P:", [(c.kind, round(c.B_star * 1e3, 2)) for c in find_all_cts(get_system("Si:P"), (0.005, 0.6))])
