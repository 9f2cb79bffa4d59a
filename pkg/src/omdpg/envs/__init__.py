from .base import Env, GroupSpec
from .signal_lever import ExactGame, SignalLever, enumerate_game, signal_lever_game
from .teamreach import TeamReachHet, random_policy_return, scripted_oracle_return

__all__ = ["Env", "GroupSpec", "ExactGame", "SignalLever", "enumerate_game", "signal_lever_game",
           "TeamReachHet", "random_policy_return", "scripted_oracle_return"]
