"""All controllable policies behind one interface: expert replay, IDM,
and the learned BC / GAIL / HAIL / SHAIL checkpoints."""

import numpy as np

from . import observation, options as options_mod
from .checkpoint import load_checkpoint
from .idm import IdmParams, idm_accel
from .learning import GaussianPolicy, OptionPolicy, norm_obs, option_set_hash
from .nets import Mlp, masked_logprob, masked_sample
from .observation import NormStats, ObsConfig
from .scenario import expert_actions
from .simulator import select_follow_vehicle
from .checkpoint import load_mlp

KINDS = ("expert_replay", "idm", "bc", "gail", "hail", "shail")


class EndOfTrack(RuntimeError):
    pass


class OptionSetMismatch(RuntimeError):
    pass


class ExpertReplayPolicy:
    kind = "expert_replay"

    def begin_episode(self, state):
        track = state.dataset.tracks[state.ego.track_id]
        self._actions = expert_actions(track)

    def act(self, state, rng):
        i = state.time_step
        if i >= len(self._actions):
            raise EndOfTrack(f"frame {i} past the recorded horizon")
        return float(self._actions[i])


class IdmPolicy:
    kind = "idm"

    def __init__(self, params=IdmParams()):
        self.params = params

    def begin_episode(self, state):
        pass

    def act(self, state, rng):
        tid = select_follow_vehicle(state)
        if tid is None:
            return idm_accel(None, state.ego.v, 0.0, self.params)
        rec = next(r for r in state.non_ego_states() if r[0] == tid)
        _, x, y, vx, vy, _, length, _ = rec
        from .geometry import project_to_path
        s_proj, _ = project_to_path(state.ego.path, (x, y))
        gap = s_proj - state.ego.s - 0.5 * (state.ego.length + length)
        return idm_accel(gap, state.ego.v, float(np.hypot(vx, vy)), self.params)


class GaussianActPolicy:
    """BC and flat GAIL checkpoints: sample the Gaussian acceleration head."""

    def __init__(self, policy, stats, kind, obs_config=ObsConfig()):
        self.policy = policy
        self.stats = stats
        self.kind = kind
        self.obs_config = obs_config

    def begin_episode(self, state):
        pass

    def act(self, state, rng):
        z = norm_obs(observation.encode(state, self.obs_config), self.stats)
        return self.policy.act(z, rng)


class HierarchicalPolicy:
    """HAIL/SHAIL checkpoints: run the option executor online. HAIL is the
    same code path with the mask forced to 1 and interruption disabled."""

    def __init__(self, policy, specs, stats, kind, obs_config=ObsConfig()):
        self.policy = policy
        self.specs = specs
        self.stats = stats
        self.kind = kind
        self.use_safety = kind == "shail"
        self.obs_config = obs_config
        self._rt = None

    def begin_episode(self, state):
        self._rt = None

    def act(self, state, rng):
        if (self._rt is not None and self.use_safety
                and options_mod.should_interrupt(state, self._rt)):
            self._rt = None
        if self._rt is None:
            z = norm_obs(observation.encode(state, self.obs_config), self.stats)
            mask = (options_mod.predict_safety(state, self.specs)
                    if self.use_safety else np.ones(len(self.specs)))
            logits = self.policy.logits(z)[0]
            k = masked_sample(logits, mask, rng)
            self._rt = options_mod.initiate(self.specs[k], state.ego)
        a, finished = options_mod.option_step(self._rt)
        if finished:
            self._rt = None
        return a


def load_policy(path, expected_option_v=None, expected_option_t=None):
    """Build an acting policy from a training checkpoint."""
    meta, arrays = load_checkpoint(path)
    kind = meta["kind"]
    stats = NormStats(mean=arrays["stats_mean"], std=arrays["stats_std"])
    hidden = tuple(meta["hidden"])
    obs_dim = meta["obs_dim"]
    rng = np.random.default_rng(0)  # shapes only; weights overwritten below
    if kind in ("bc", "gail"):
        gp = GaussianPolicy.create(rng, obs_dim=obs_dim, hidden=hidden)
        load_mlp("policy", gp.net, arrays)
        gp.log_std[...] = arrays["log_std"]
        return GaussianActPolicy(gp, stats, kind)
    if kind in ("hail", "shail"):
        if expected_option_v is not None:
            if option_set_hash(expected_option_v, expected_option_t) != \
                    meta["option_set_hash"]:
                raise OptionSetMismatch("checkpoint trained on a different option set")
        specs = options_mod.enumerate_options(meta["option_v"], meta["option_t"])
        op = OptionPolicy.create(rng, len(specs), obs_dim=obs_dim, hidden=hidden)
        load_mlp("policy", op.net, arrays)
        return HierarchicalPolicy(op, specs, stats, kind)
    raise ValueError(f"checkpoint kind {kind!r} is not an acting policy")


def make_builtin(kind):
    if kind == "expert_replay":
        return ExpertReplayPolicy()
    if kind == "idm":
        return IdmPolicy()
    raise ValueError(f"{kind!r} needs a checkpoint; built-ins are "
                     "expert_replay and idm")


def act(policy, state, rng):
    """Single-step acceleration from any policy kind."""
    return policy.act(state, rng)
