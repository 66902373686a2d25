"""Tabular and actor-critic learners driven by shaped rewards."""

from hears.learner.actor_critic import AcConfig, AcNets, AcShaping, actor_critic_train
from hears.learner.mlp import MlpShape, init_params, mlp_backward, mlp_forward
from hears.learner.probe import ProbeResult, alternating_policy, oscillation_probe
from hears.learner.replay import ReplayBuffer, Transition
from hears.learner.tabular import TabularHyper, TabularShaping, episodes_to_fraction, tabular_q_learning

__all__ = [
    "AcConfig", "AcNets", "AcShaping", "MlpShape", "ProbeResult", "ReplayBuffer", "TabularHyper",
    "TabularShaping", "Transition", "actor_critic_train", "alternating_policy", "episodes_to_fraction",
    "init_params", "mlp_backward", "mlp_forward", "oscillation_probe", "tabular_q_learning",
]
