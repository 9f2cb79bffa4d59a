"""MATD3-style baselines assembled from the same parts as OMDPG.

A variant is three switches: how actors share parameters, which actor
objective is used (plain min-Q deterministic policy gradient or the
marginal-value objective) and which critic loss trains the ensemble (twin
critics with clipped double-Q targets, or the full ensemble loss).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .actors import update_actor_targets
from .ccga import UpdateParams, UpdateRngs, _order, actor_update
from .errors import ConfigError
from .gqc import CriticRngs, PUConfig, critic_update, update_targets


@dataclass(frozen=True)
class BaselineConfig:
    variant: str
    sharing: str             # nops | parps | fups
    actor_objective: str     # dpg | omq
    critic_objective: str    # twin | gqc
    n_critics: int


_SWITCHES = {
    "omdpg": ("parps", "omq", "gqc"),
    "matd3-nops": ("nops", "dpg", "twin"),
    "matd3-parps": ("parps", "dpg", "twin"),
    "matd3-fups": ("fups", "dpg", "twin"),
    "matd3-parps-omq": ("parps", "omq", "twin"),
    "matd3-parps-gqc": ("parps", "dpg", "gqc"),
}
VARIANTS = tuple(_SWITCHES)


def baseline_config(variant: str, n_critics: int = 5) -> BaselineConfig:
    """Twin-critic variants always use two heads; ensemble variants use ``n_critics``."""
    if variant not in _SWITCHES:
        raise ConfigError(f"unknown algorithm {variant!r}; choose from {', '.join(VARIANTS)}")
    sharing, actor_obj, critic_obj = _SWITCHES[variant]
    heads = 2 if critic_obj == "twin" else int(n_critics)
    if heads < 2:
        raise ConfigError("the critic ensemble needs at least two heads")
    return BaselineConfig(variant, sharing, actor_obj, critic_obj, heads)


def effective_pu(config: BaselineConfig, pu: PUConfig) -> PUConfig:
    """Plain MATD3 variants train without the pessimistic OOD term."""
    if config.actor_objective == "dpg" and config.critic_objective == "twin":
        return replace(pu, lambda_pu=0.0)
    return pu


def independent_batches(config: BaselineConfig) -> bool:
    return config.critic_objective == "gqc"


def baseline_update(config: BaselineConfig, actors, ensemble, batches, hp: UpdateParams, rngs: UpdateRngs,
                    do_actor: bool = True) -> dict:
    order = _order(actors, hp.order)
    pu = effective_pu(config, hp.pu)
    mode = "min" if config.critic_objective == "twin" else "own"
    info = critic_update(ensemble, batches, actors, pu, hp.gamma, CriticRngs(rngs.noise, rngs.ood), order, mode)
    if do_actor:
        info.update(actor_update(actors, ensemble, batches[0], config.actor_objective, order, rngs.actor,
                                 hp.temperature))
        update_actor_targets(actors, hp.tau)
        update_targets(ensemble, hp.tau)
    return info
