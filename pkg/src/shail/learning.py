"""Training: behavior cloning, the adversarial discriminator, PPO for the
Gaussian low-level policy and the safety-masked option policy, and the full
flat / hierarchical adversarial imitation loops."""

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import observation, options as options_mod, simulator
from .checkpoint import (load_checkpoint, load_mlp, mlp_arrays, rng_from_json,
                         rng_state_to_json, save_checkpoint)
from .idm import A_CLIP, DT
from .nets import (Adam, Mlp, gaussian_dlogprob, gaussian_entropy,
                   gaussian_logprob, gaussian_sample, masked_dentropy,
                   masked_dlogprob, masked_entropy, masked_logprob,
                   masked_probs, masked_sample)
from .observation import OBS_DIM, NormStats, ObsConfig, normalize
from .occupancy import (TabularOption, TabularOptionsMdp, flat_occupancy,
                        hierarchical_occupancy)
from .scenario import expert_transitions


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    kind: str = "gail"              # bc | gail | hail | shail
    seed: int = 0
    iterations: int = 50
    steps_per_iter: int = 600
    max_episode_steps: int = 400
    hidden: tuple = (64, 64)
    lr: float = 3e-4
    lr_value: float = 1e-3
    lr_disc: float = 1e-3
    disc_steps: int = 2
    disc_minibatch: int = 128
    ppo_epochs: int = 6
    minibatch: int = 128
    eps_clip: float = 0.2
    ent_coef: float = 0.01
    gamma: float = 0.99
    lam: float = 0.95
    r_clip: float = 10.0
    kl_target: float = 0.015
    option_v: tuple = options_mod.DEFAULT_V
    option_t: tuple = options_mod.DEFAULT_T
    bc_epochs: int = 60
    bc_batch: int = 64
    bc_lr: float = 1e-3
    bc_val_frac: float = 0.1

    def validate(self):
        if self.kind not in ("bc", "gail", "hail", "shail"):
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.iterations < 0 or self.steps_per_iter <= 0:
            raise ConfigError("iterations must be >= 0, steps_per_iter > 0")


def option_set_hash(V, T):
    blob = json.dumps([sorted(float(v) for v in V),
                       sorted(float(t) for t in T)])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# policy containers


@dataclass
class GaussianPolicy:
    net: Mlp
    log_std: np.ndarray

    @classmethod
    def create(cls, rng, obs_dim=OBS_DIM, hidden=(64, 64)):
        return cls(net=Mlp([obs_dim, *hidden, 1], rng, out_scale=0.01),
                   log_std=np.zeros(1))

    def param_arrays(self):
        return self.net.param_arrays() + [self.log_std]

    def mean(self, z):
        return self.net.forward(z)[:, 0]

    def act(self, z, rng):
        m = float(self.net.forward(z)[0, 0])
        return float(gaussian_sample(m, self.log_std[0], rng))

    def logprob(self, z, a):
        m = self.mean(np.atleast_2d(z))
        return gaussian_logprob(m, self.log_std[0], np.asarray(a, dtype=float))


@dataclass
class OptionPolicy:
    net: Mlp  # obs -> per-option scores psi

    @classmethod
    def create(cls, rng, n_options, obs_dim=OBS_DIM, hidden=(64, 64)):
        return cls(net=Mlp([obs_dim, *hidden, n_options], rng, out_scale=0.01))

    def param_arrays(self):
        return self.net.param_arrays()

    def logits(self, z):
        return self.net.forward(z)


# ---------------------------------------------------------------------------
# losses (each returns loss, grads aligned with param_arrays())


def bc_loss_and_grad(policy, Z, A):
    n = Z.shape[0]
    mean, acts = policy.net.forward_cache(Z)
    mean = mean[:, 0]
    lp = gaussian_logprob(mean, policy.log_std[0], A)
    loss = -float(np.mean(lp))
    d_mean, d_ls = gaussian_dlogprob(mean, policy.log_std[0], A)
    dW, db, _ = policy.net.backward(acts, (-d_mean / n)[:, None])
    g_ls = np.array([-float(np.sum(d_ls)) / n])
    return loss, dW + db + [g_ls]


def bc_loss(policy, Z, A):
    mean = policy.mean(Z)
    return -float(np.mean(gaussian_logprob(mean, policy.log_std[0], A)))


def disc_loss_and_grad(disc, X, y):
    n = X.shape[0]
    logit, acts = disc.forward_cache(X)
    logit = logit[:, 0]
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    sig = 1.0 / (1.0 + np.exp(-logit))
    dW, db, _ = disc.backward(acts, ((sig - y) / n)[:, None])
    acc = float(np.mean((sig > 0.5) == (y > 0.5)))
    return loss, dW + db, acc


def disc_loss(disc, X, y):
    logit = disc.forward(X)[:, 0]
    return float(np.mean(np.logaddexp(0.0, logit) - y * logit))


def imagined_reward(disc, pair_z, r_clip=10.0):
    """Positive surrogate reward: softplus of the discriminator logit."""
    z = np.atleast_2d(pair_z)
    logit = disc.forward(z)[:, 0]
    r = np.clip(np.logaddexp(0.0, logit), 0.0, r_clip)
    return r if np.ndim(pair_z) > 1 else float(r[0])


def ppo_gaussian_loss_and_grad(policy, Z, A, logp_old, adv, eps_clip, ent_coef):
    n = Z.shape[0]
    mean, acts = policy.net.forward_cache(Z)
    mean = mean[:, 0]
    lp = gaussian_logprob(mean, policy.log_std[0], A)
    ratio = np.exp(lp - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv
    ent = gaussian_entropy(policy.log_std)
    loss = -float(np.mean(np.minimum(surr1, surr2))) - ent_coef * ent
    dobj_dlp = np.where(surr1 <= surr2, ratio * adv, 0.0)
    d_mean, d_ls = gaussian_dlogprob(mean, policy.log_std[0], A)
    coef = -dobj_dlp / n
    dW, db, _ = policy.net.backward(acts, (coef * d_mean)[:, None])
    in_range = (policy.log_std[0] > -5.0) and (policy.log_std[0] < 2.0)
    g_ls = np.array([float(np.sum(coef * d_ls)) - ent_coef * (1.0 if in_range else 0.0)])
    approx_kl = float(np.mean(logp_old - lp))
    return loss, dW + db + [g_ls], approx_kl


def ppo_gaussian_loss(policy, Z, A, logp_old, adv, eps_clip, ent_coef):
    mean = policy.mean(Z)
    lp = gaussian_logprob(mean, policy.log_std[0], A)
    ratio = np.exp(lp - logp_old)
    surr = np.minimum(ratio * adv,
                      np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv)
    return -float(np.mean(surr)) - ent_coef * gaussian_entropy(policy.log_std)


def ppo_masked_loss_and_grad(policy, Z, K, masks, logp_old, adv, eps_clip, ent_coef):
    n = Z.shape[0]
    logits, acts = policy.net.forward_cache(Z)
    lp = masked_logprob(logits, masks, K)
    ratio = np.exp(lp - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv
    ent = masked_entropy(logits, masks)
    loss = -float(np.mean(np.minimum(surr1, surr2))) - ent_coef * float(np.mean(ent))
    dobj_dlp = np.where(surr1 <= surr2, ratio * adv, 0.0)
    dlogits = (-dobj_dlp / n)[:, None] * masked_dlogprob(logits, masks, K)
    dlogits -= (ent_coef / n) * masked_dentropy(logits, masks)
    dW, db, _ = policy.net.backward(acts, dlogits)
    approx_kl = float(np.mean(logp_old - lp))
    return loss, dW + db, approx_kl


def ppo_masked_loss(policy, Z, K, masks, logp_old, adv, eps_clip, ent_coef):
    logits = policy.logits(Z)
    lp = masked_logprob(logits, masks, K)
    ratio = np.exp(lp - logp_old)
    surr = np.minimum(ratio * adv,
                      np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv)
    ent = masked_entropy(logits, masks)
    return -float(np.mean(surr)) - ent_coef * float(np.mean(ent))


def value_loss_and_grad(net, Z, returns):
    n = Z.shape[0]
    v, acts = net.forward_cache(Z)
    v = v[:, 0]
    loss = float(np.mean((v - returns) ** 2))
    dW, db, _ = net.backward(acts, (2.0 * (v - returns) / n)[:, None])
    return loss, dW + db


# ---------------------------------------------------------------------------
# GAE (supports per-step discounts for semi-Markov decision sequences)


def compute_gae(rewards, values, next_values, discounts, cont, lam):
    """delta_t = r_t + g_t v(next_t) - v_t; A_t = delta_t + g_t lam cont_t A_{t+1}."""
    n = len(rewards)
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + discounts[t] * next_values[t] - values[t]
        acc = delta + discounts[t] * lam * cont[t] * acc
        adv[t] = acc
    return adv, adv + values


def normalize_adv(adv):
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# ---------------------------------------------------------------------------
# environment wrapper


class SimEnv:
    """Episode-oriented wrapper around the simulator for training/eval."""

    def __init__(self, dataset, max_episode_steps=400, eval_mode=False,
                 obs_config=ObsConfig()):
        self.dataset = dataset
        self.max_episode_steps = max_episode_steps
        self.eval_mode = eval_mode
        self.obs_config = obs_config
        self.state = None

    def reset(self, seed=0, ego_track_id=None):
        self.state = simulator.reset(self.dataset, ego_track_id=ego_track_id,
                                     rng_seed=seed, eval_mode=self.eval_mode)
        return observation.encode(self.state, self.obs_config)

    def step(self, accel):
        self.state, info = simulator.step(self.state, accel)
        obs = observation.encode(self.state, self.obs_config)
        terminal = self.state.done != simulator.RUNNING
        truncated = (not terminal) and self.state.time_step >= self.max_episode_steps
        return obs, terminal, truncated, info

    @property
    def collided(self):
        return self.state.done == simulator.COLLISION


def fit_pair_stats(expert):
    rows = np.array([np.concatenate([t.observation, [t.action]]) for t in expert])
    return NormStats.fit(rows), rows


def norm_obs(obs, stats):
    return (np.asarray(obs) - stats.mean[:-1]) / np.maximum(stats.std[:-1], 1e-6)


def norm_pair(obs, action, stats):
    row = np.concatenate([np.asarray(obs, dtype=float), [action]])
    return (row - stats.mean) / np.maximum(stats.std, 1e-6)


# ---------------------------------------------------------------------------
# behavior cloning


def bc_train(expert, config, rng=None, log=None):
    """Minibatch Adam on the mean NLL; returns the parameters with the best
    validation loss (plus the fitted normalization stats)."""
    config.validate()
    if len(expert) == 0:
        raise ConfigError("no expert transitions")
    rng = rng or np.random.default_rng(config.seed)
    stats, rows = fit_pair_stats(expert)
    Z = (rows[:, :-1] - stats.mean[:-1]) / np.maximum(stats.std[:-1], 1e-6)
    A = rows[:, -1]
    n = Z.shape[0]
    perm = rng.permutation(n)
    n_val = max(int(round(config.bc_val_frac * n)), 1) if n > 1 else 0
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size == 0:
        tr_idx = perm
    policy = GaussianPolicy.create(rng, obs_dim=Z.shape[1], hidden=config.hidden)
    opt = Adam(policy.param_arrays(), lr=config.bc_lr)
    best = ([a.copy() for a in policy.param_arrays()],
            bc_loss(policy, Z[val_idx], A[val_idx]) if n_val else math.inf)
    for epoch in range(config.bc_epochs):
        order = rng.permutation(tr_idx.size)
        losses = []
        for start in range(0, tr_idx.size, config.bc_batch):
            idx = tr_idx[order[start:start + config.bc_batch]]
            loss, grads = bc_loss_and_grad(policy, Z[idx], A[idx])
            opt.step(policy.param_arrays(), grads)
            losses.append(loss)
        if n_val:
            vl = bc_loss(policy, Z[val_idx], A[val_idx])
            if vl < best[1]:
                best = ([a.copy() for a in policy.param_arrays()], vl)
        if log is not None:
            log({"epoch": epoch, "train_nll": float(np.mean(losses)),
                 "val_nll": float(best[1])})
    if n_val and config.bc_epochs > 0:
        for a, b in zip(policy.param_arrays(), best[0]):
            a[...] = b
    return policy, stats


# ---------------------------------------------------------------------------
# discriminator


def discriminator_update(disc, opt, expert_Z, policy_Z):
    """One ascent step on the binary cross-entropy (expert=1, policy=0)."""
    X = np.concatenate([expert_Z, policy_Z])
    y = np.concatenate([np.ones(len(expert_Z)), np.zeros(len(policy_Z))])
    loss, grads, acc = disc_loss_and_grad(disc, X, y)
    opt.step(disc.param_arrays(), grads)
    return loss, acc


# ---------------------------------------------------------------------------
# PPO updates


def ppo_update(policy, value_net, opt_pi, opt_v, Z, A, logp_old, adv, returns,
               config, rng):
    """Clipped-surrogate PPO with minibatches, epochs, and a KL stop guard."""
    n = Z.shape[0]
    adv_n = normalize_adv(adv)
    stop = False
    for _ in range(config.ppo_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = order[start:start + config.minibatch]
            loss, grads, kl = ppo_gaussian_loss_and_grad(
                policy, Z[idx], A[idx], logp_old[idx], adv_n[idx],
                config.eps_clip, config.ent_coef)
            if kl > 1.5 * config.kl_target:
                stop = True
                break
            opt_pi.step(policy.param_arrays(), grads)
            vl, vgrads = value_loss_and_grad(value_net, Z[idx], returns[idx])
            opt_v.step(value_net.param_arrays(), vgrads)
        if stop:
            break
    return policy, value_net


def ppo_update_masked(policy, value_net, opt_pi, opt_v, Z, K, masks, logp_old,
                      adv, returns, config, rng):
    n = Z.shape[0]
    adv_n = normalize_adv(adv)
    stop = False
    for _ in range(config.ppo_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            idx = order[start:start + config.minibatch]
            loss, grads, kl = ppo_masked_loss_and_grad(
                policy, Z[idx], K[idx], masks[idx], logp_old[idx], adv_n[idx],
                config.eps_clip, config.ent_coef)
            if kl > 1.5 * config.kl_target:
                stop = True
                break
            opt_pi.step(policy.param_arrays(), grads)
            vl, vgrads = value_loss_and_grad(value_net, Z[idx], returns[idx])
            opt_v.step(value_net.param_arrays(), vgrads)
        if stop:
            break
    return policy, value_net


# ---------------------------------------------------------------------------
# rollout collection


@dataclass
class Batch:
    Z: np.ndarray            # normalized observations at each low-level step
    A: np.ndarray            # sampled accelerations
    logp: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    cont: np.ndarray         # 1 if the advantage chains to the next sample
    pairs: np.ndarray        # normalized (obs, realized accel) rows
    ep_lengths: list
    ep_success: list


def collect_gaussian(env, policy, value_net, stats, n_steps, rng, config):
    Z, A, LP, V, NV, CONT, PAIR = [], [], [], [], [], [], []
    ep_lengths, ep_success = [], []
    obs = None
    ep_start = 0
    steps = 0
    while steps < n_steps:
        if obs is None:
            obs = env.reset(seed=int(rng.integers(2 ** 31 - 1)))
            ep_start = len(Z)
        z = norm_obs(obs, stats)
        a = policy.act(z, rng)
        v = float(value_net.forward(z)[0, 0])
        lp = float(policy.logprob(z, a)[0])
        next_obs, terminal, truncated, info = env.step(a)
        Z.append(z)
        A.append(a)
        LP.append(lp)
        V.append(v)
        NV.append(0.0)
        CONT.append(1.0)
        PAIR.append(norm_pair(obs, info.commanded_accel, stats))
        steps += 1
        last = steps >= n_steps
        if terminal or truncated or last:
            end = len(Z)
            for t in range(ep_start, end - 1):
                NV[t] = V[t + 1]
            if terminal:
                NV[end - 1] = 0.0
            else:
                NV[end - 1] = float(value_net.forward(
                    norm_obs(next_obs, stats))[0, 0])
            CONT[end - 1] = 0.0
            if terminal or truncated:
                ep_lengths.append(end - ep_start)
                ep_success.append(not env.collided)
                obs = None
            else:
                obs = next_obs
        else:
            obs = next_obs
    return Batch(Z=np.array(Z), A=np.array(A), logp=np.array(LP),
                 values=np.array(V), next_values=np.array(NV),
                 cont=np.array(CONT), pairs=np.array(PAIR),
                 ep_lengths=ep_lengths, ep_success=ep_success)


@dataclass
class OptionBatch:
    H: np.ndarray            # normalized observation at each decision point
    K: np.ndarray            # chosen option indices
    masks: np.ndarray        # safety vector at initiation
    r_tilde: np.ndarray      # discounted imagined return over the option
    T_o: np.ndarray          # realized option durations (frames)
    logp: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    discounts: np.ndarray    # gamma ** T_o
    cont: np.ndarray
    pairs: np.ndarray        # low-level (obs, accel) rows for the discriminator
    pair_slices: list        # per decision, (start, end) into pairs
    ep_lengths: list
    ep_success: list


def shail_collect(env, policy, specs, value_net, disc, stats, n_steps, rng,
                  config, use_mask=True, use_interrupt=True):
    """Run the option executor, scoring each executed option with the
    discounted imagined reward accumulated over its low-level steps."""
    H, K, MASK, RT, TO, LP, V, NV, G, CONT = [], [], [], [], [], [], [], [], [], []
    PAIR, SLICES = [], []
    ep_lengths, ep_success = [], []
    obs = None
    ep_start = 0
    ep_steps = 0
    steps = 0
    gamma = config.gamma
    while steps < n_steps:
        if obs is None:
            obs = env.reset(seed=int(rng.integers(2 ** 31 - 1)))
            ep_start = len(H)
            ep_steps = 0
        z = norm_obs(obs, stats)
        mask = (options_mod.predict_safety(env.state, specs) if use_mask
                else np.ones(len(specs)))
        logits = policy.logits(z)[0]
        k = masked_sample(logits, mask, rng)
        lp = float(masked_logprob(logits, mask, k))
        v = float(value_net.forward(z)[0, 0])
        rt = options_mod.initiate(specs[k], env.state.ego)
        pair_start = len(PAIR)
        terminal = truncated = False
        t_o = 0
        while True:
            a, finished = options_mod.option_step(rt)
            next_obs, terminal, truncated, info = env.step(a)
            PAIR.append(norm_pair(obs, info.commanded_accel, stats))
            obs = next_obs
            t_o += 1
            steps += 1
            ep_steps += 1
            if terminal or truncated or finished or steps >= n_steps:
                break
            if use_interrupt and options_mod.should_interrupt(env.state, rt):
                break
        rows = np.array(PAIR[pair_start:])
        r = imagined_reward(disc, rows, config.r_clip)
        r_tilde = float(np.sum(r * gamma ** np.arange(t_o)))
        H.append(z)
        K.append(k)
        MASK.append(mask)
        RT.append(r_tilde)
        TO.append(t_o)
        LP.append(lp)
        V.append(v)
        NV.append(0.0)
        G.append(gamma ** t_o)
        CONT.append(1.0)
        SLICES.append((pair_start, len(PAIR)))
        last = steps >= n_steps
        if terminal or truncated or last:
            end = len(H)
            for t in range(ep_start, end - 1):
                NV[t] = V[t + 1]
            if terminal:
                NV[end - 1] = 0.0
            else:
                NV[end - 1] = float(value_net.forward(norm_obs(obs, stats))[0, 0])
            CONT[end - 1] = 0.0
            if terminal or truncated:
                ep_lengths.append(ep_steps)
                ep_success.append(not env.collided)
                obs = None
            # else: collection budget hit mid-episode; loop exits
        # within an episode successive decision samples chain via CONT=1
    return OptionBatch(H=np.array(H), K=np.array(K), masks=np.array(MASK),
                       r_tilde=np.array(RT), T_o=np.array(TO),
                       logp=np.array(LP), values=np.array(V),
                       next_values=np.array(NV), discounts=np.array(G),
                       cont=np.array(CONT), pairs=np.array(PAIR),
                       pair_slices=SLICES, ep_lengths=ep_lengths,
                       ep_success=ep_success)


# ---------------------------------------------------------------------------
# run directories and checkpoints


def adam_arrays(prefix, opt):
    out = {f"{prefix}_t": np.array([opt.t], dtype=np.int64)}
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        out[f"{prefix}_m{i}"] = m
        out[f"{prefix}_v{i}"] = v
    return out


def load_adam(prefix, opt, arrays):
    opt.t = int(arrays[f"{prefix}_t"][0])
    for i in range(len(opt.m)):
        opt.m[i][...] = arrays[f"{prefix}_m{i}"]
        opt.v[i][...] = arrays[f"{prefix}_v{i}"]


def config_to_meta(config):
    d = {}
    for k, v in vars(config).items():
        d[k] = list(v) if isinstance(v, tuple) else v
    return d


def _write_metrics(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def _read_metrics(path):
    if not os.path.exists(path):
        return []
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


class _Run:
    """Mutable training state shared by the adversarial trainers; everything
    needed for a bit-exact resume lives here."""

    def __init__(self, config, stats):
        self.config = config
        self.stats = stats
        rng = np.random.default_rng(config.seed)
        self.hierarchical = config.kind in ("hail", "shail")
        if self.hierarchical:
            self.specs = options_mod.enumerate_options(config.option_v,
                                                       config.option_t)
            self.policy = OptionPolicy.create(rng, len(self.specs),
                                              hidden=config.hidden)
        else:
            self.specs = None
            self.policy = GaussianPolicy.create(rng, hidden=config.hidden)
        self.value_net = Mlp([OBS_DIM, *config.hidden, 1], rng)
        self.disc = Mlp([OBS_DIM + 1, *config.hidden, 1], rng)
        self.opt_pi = Adam(self.policy.param_arrays(), lr=config.lr)
        self.opt_v = Adam(self.value_net.param_arrays(), lr=config.lr_value)
        self.opt_d = Adam(self.disc.param_arrays(), lr=config.lr_disc)
        self.rng = rng
        self.iteration = 0

    def checkpoint_payload(self):
        meta = {
            "kind": self.config.kind,
            "iteration": self.iteration,
            "config": config_to_meta(self.config),
            "rng_state": rng_state_to_json(self.rng),
            "obs_dim": OBS_DIM,
            "hidden": list(self.config.hidden),
        }
        arrays = {"stats_mean": self.stats.mean, "stats_std": self.stats.std}
        if self.hierarchical:
            meta["option_v"] = sorted(float(v) for v in self.config.option_v)
            meta["option_t"] = sorted(float(t) for t in self.config.option_t)
            meta["option_set_hash"] = option_set_hash(self.config.option_v,
                                                      self.config.option_t)
            arrays.update(mlp_arrays("policy", self.policy.net))
        else:
            arrays.update(mlp_arrays("policy", self.policy.net))
            arrays["log_std"] = self.policy.log_std
        arrays.update(mlp_arrays("value", self.value_net))
        arrays.update(mlp_arrays("disc", self.disc))
        arrays.update(adam_arrays("opt_pi", self.opt_pi))
        arrays.update(adam_arrays("opt_v", self.opt_v))
        arrays.update(adam_arrays("opt_d", self.opt_d))
        return meta, arrays

    def save(self, path):
        meta, arrays = self.checkpoint_payload()
        save_checkpoint(path, meta, arrays)

    def restore(self, path):
        meta, arrays = load_checkpoint(path)
        if meta["kind"] != self.config.kind:
            raise ConfigError(f"checkpoint kind {meta['kind']} != {self.config.kind}")
        load_mlp("policy", self.policy.net, arrays)
        if not self.hierarchical:
            self.policy.log_std[...] = arrays["log_std"]
        load_mlp("value", self.value_net, arrays)
        load_mlp("disc", self.disc, arrays)
        load_adam("opt_pi", self.opt_pi, arrays)
        load_adam("opt_v", self.opt_v, arrays)
        load_adam("opt_d", self.opt_d, arrays)
        self.stats = NormStats(mean=arrays["stats_mean"], std=arrays["stats_std"])
        self.rng = rng_from_json(meta["rng_state"])
        self.iteration = int(meta["iteration"])


# ---------------------------------------------------------------------------
# adversarial training loops


def _adversarial_train(dataset, config, out_dir=None, resume=False,
                       progress=None):
    config.validate()
    expert = expert_transitions(dataset)
    if not expert:
        raise ConfigError("dataset yields no expert transitions")
    stats, rows = fit_pair_stats(expert)
    expert_Z = (rows - stats.mean) / np.maximum(stats.std, 1e-6)
    run = _Run(config, stats)
    metrics = []
    ckpt_path = os.path.join(out_dir, "checkpoint.npz") if out_dir else None
    metrics_path = os.path.join(out_dir, "metrics.jsonl") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if resume and ckpt_path and os.path.exists(ckpt_path):
        run.restore(ckpt_path)
        metrics = [m for m in _read_metrics(metrics_path)
                   if m["iteration"] <= run.iteration]
    elif ckpt_path:
        run.save(ckpt_path)  # iteration-0 checkpoint
        _write_metrics(metrics_path, metrics)
    env = SimEnv(dataset, max_episode_steps=config.max_episode_steps)
    for it in range(run.iteration + 1, config.iterations + 1):
        if run.hierarchical:
            batch = shail_collect(env, run.policy, run.specs, run.value_net,
                                  run.disc, run.stats, config.steps_per_iter,
                                  run.rng, config,
                                  use_mask=(config.kind == "shail"),
                                  use_interrupt=(config.kind == "shail"))
            adv, ret = compute_gae(batch.r_tilde, batch.values,
                                   batch.next_values, batch.discounts,
                                   batch.cont, config.lam)
            ppo_update_masked(run.policy, run.value_net, run.opt_pi, run.opt_v,
                              batch.H, batch.K, batch.masks, batch.logp, adv,
                              ret, config, run.rng)
            mean_r = float(np.mean(batch.r_tilde)) if len(batch.r_tilde) else 0.0
            mean_to = float(np.mean(batch.T_o)) if len(batch.T_o) else 0.0
        else:
            batch = collect_gaussian(env, run.policy, run.value_net, run.stats,
                                     config.steps_per_iter, run.rng, config)
            rewards = imagined_reward(run.disc, batch.pairs, config.r_clip)
            adv, ret = compute_gae(rewards, batch.values, batch.next_values,
                                   np.full(len(rewards), config.gamma),
                                   batch.cont, config.lam)
            ppo_update(run.policy, run.value_net, run.opt_pi, run.opt_v,
                       batch.Z, batch.A, batch.logp, adv, ret, config, run.rng)
            mean_r = float(np.mean(rewards)) if len(rewards) else 0.0
            mean_to = 1.0
        disc_acc = 0.0
        for _ in range(config.disc_steps):
            eidx = run.rng.integers(0, len(expert_Z), config.disc_minibatch)
            pidx = run.rng.integers(0, len(batch.pairs),
                                    min(config.disc_minibatch, len(batch.pairs)))
            _, disc_acc = discriminator_update(run.disc, run.opt_d,
                                               expert_Z[eidx], batch.pairs[pidx])
        run.iteration = it
        record = {
            "iteration": it,
            "disc_accuracy": round(disc_acc, 6),
            "mean_imagined_reward": round(mean_r, 6),
            "mean_option_duration": round(mean_to, 6),
            "success_rate": (round(float(np.mean(batch.ep_success)), 6)
                             if batch.ep_success else None),
            "n_episodes": len(batch.ep_success),
        }
        metrics.append(record)
        if out_dir:
            run.save(ckpt_path)
            _write_metrics(metrics_path, metrics)
        if progress:
            progress(record)
    return run, metrics


def gail_train(dataset, config, out_dir=None, resume=False, progress=None):
    if config.kind != "gail":
        raise ConfigError("gail_train requires kind='gail'")
    return _adversarial_train(dataset, config, out_dir, resume, progress)


def shail_train(dataset, config, out_dir=None, resume=False, progress=None):
    if config.kind not in ("shail", "hail"):
        raise ConfigError("shail_train requires kind='shail' or 'hail'")
    return _adversarial_train(dataset, config, out_dir, resume, progress)


def bc_train_run(dataset, config, out_dir=None, progress=None):
    """BC entry point matching the adversarial trainers' artifact layout."""
    expert = expert_transitions(dataset)
    rng = np.random.default_rng(config.seed)
    metrics = []

    def log(rec):
        metrics.append(rec)
        if progress:
            progress(rec)

    policy, stats = bc_train(expert, config, rng=rng, log=log)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        meta = {"kind": "bc", "iteration": config.bc_epochs,
                "config": config_to_meta(config), "obs_dim": OBS_DIM,
                "hidden": list(config.hidden),
                "rng_state": rng_state_to_json(rng)}
        arrays = {"stats_mean": stats.mean, "stats_std": stats.std,
                  "log_std": policy.log_std}
        arrays.update(mlp_arrays("policy", policy.net))
        save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), meta, arrays)
        _write_metrics(os.path.join(out_dir, "metrics.jsonl"), metrics)
    return policy, stats, metrics
