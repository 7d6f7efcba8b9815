from .heuristic import AgentPlan, expert_actions, plan_core, sample_feasible_constraints
from .horizon import horizon_policy_actions
