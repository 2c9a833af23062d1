"""Partial-correlation checks of the negative-control assumptions.

With the confounder available (simulation only) all four rows are shown;
on observed data only the testable W _||_ Z | X row is reported.
"""

from nccerf import Scenario, assumption_tests, simulate

data = simulate(Scenario(1, n=2000, seed=3))
print(assumption_tests(data).to_text())
print()
print(assumption_tests(data.without_u()).to_text())
