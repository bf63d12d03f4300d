"""How long do replicas last?

Run: python demos/03_churn.py

Simulates the 5,646-replica population under the bundled hazard
calibration, averages 20 seeds and prints a coarse text chart of the
missing share for anonymous and registration sites. The exact expected
curve is printed alongside as a check on the Monte-Carlo mean.
"""

from graffiti.sim import PopulationSpec, calibrated, check_crossover, expected_timeline, run_many
from graffiti.sitehost import EXPERIMENT_COUNTS

spec = PopulationSpec(EXPERIMENT_COUNTS)
hazard = calibrated()
mean = run_many(spec, hazard, 324, range(20))
exact = expected_timeline(spec, hazard, 324)

print("day  missing  (exact)  anonymous  registration")
for day in (1, 7, 14, 42, 100, 120, 200, 324):
    i = day - 1
    anon = mean.missing_fraction("anonymous")[i]
    reg = mean.missing_fraction("registration")[i]
    print(f"{day:>3}  {mean.missing_fraction()[i]:>6.1%}  ({exact.missing_fraction()[i]:>5.1%})  "
          f"{anon:>6.1%} {'#' * round(anon * 40):<40} {reg:>6.1%} {'#' * round(reg * 40)}")

print(f"anonymous sites overtake registration sites in losses on day {check_crossover(mean)}")
print(f"still available after 324 days: {mean.available_fraction()[-1]:.1%}")
