"""How the penalty budget trades off against cost on the gridworld.

For each budget the robust policy is solved once. The table shows its planned
cost from (1,0), its worst-case penalty, and the trap visits seen in simulation
under a uniformly random attack. Budgets below 1 cannot be replanned from the
trap cell itself (staying there already costs 1), so the receding-horizon run
stops with an error there.
"""

from robustcmdp import gridworld as gw
from robustcmdp.baselines import solve_robust
from robustcmdp.simulate import AdversaryModel, run
from robustcmdp.solver import InfeasibleQuery, evaluate_policy_penalty

spec = gw.GridSpec()
mdp, cs, _ = gw.build(spec)
x0 = spec.index((1, 0))
print(f"{'l0':>5} {'cost':>8} {'penalty':>8} {'trap visits':>12}")
for l0 in (0.5, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5):
    c = cs.with_l0(l0)
    values, policy = solve_robust(mdp, c)
    pen = evaluate_policy_penalty(mdp, c, policy, x0, l0)
    try:
        rep = run(mdp, c, policy, x0, AdversaryModel("uniform"), runs=2000, steps=200, seed=1,
                  trap=spec.index(spec.trap))
        visits = str(rep.trap_total)
    except InfeasibleQuery:
        visits = "replan fails"
    print(f"{l0:5.2f} {values.value(0, x0, l0):8.4f} {pen:8.4f} {visits:>12}")
