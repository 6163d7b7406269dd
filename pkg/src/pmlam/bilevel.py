"""Alternating bilevel training.

Every mini-batch performs, in order: one optimizer step on the embedding
tables against the inner (adaptive-margin) objective, construction of proxy
parameters via a plain gradient step from the pre-update tables, and one
optimizer step on the margin nets against the outer (fixed-margin) objective
evaluated at the proxy. The margin-net gradient is the approximate
hypergradient: the outer gradient at the proxy, pushed through the inner
objective's mixed second derivative, which is estimated by central finite
differences of the exact first-order margin-net gradient.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from . import evaluator, sampler, simgraph
from .embeddings import GaussianEmbeddingTable, init_table, project
from .losses import TripletBatch, batch_inner, batch_outer, zero_theta_grads
from .margin_net import init_margin_net


class NumericFailure(RuntimeError):
    """Non-finite loss or gradient; message carries a dump of the batches."""


# ---------------------------------------------------------------------------
# first-order optimizers over dicts of named arrays


class Sgd:
    kind = "sgd"

    def __init__(self, alpha):
        self.alpha = alpha
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for name, g in grads.items():
            params[name] -= self.alpha * g

    def state(self):
        return {"kind": self.kind, "alpha": self.alpha, "t": self.t, "slots": {}}


class Adam:
    kind = "adam"

    def __init__(self, alpha, beta1=0.9, beta2=0.999, eps=1e-8):
        self.alpha = alpha
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            params[name] -= self.alpha * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self):
        return {"kind": self.kind, "alpha": self.alpha, "t": self.t,
                "slots": {"m": self.m, "v": self.v}}


def make_optimizer(kind, alpha):
    if kind == "sgd":
        return Sgd(alpha)
    if kind == "adam":
        return Adam(alpha)
    raise ValueError(f"unknown optimizer kind {kind!r}")


# ---------------------------------------------------------------------------
# theta updates, proxy, hypergradient


def theta_dict(users, items):
    return {"user_mu": users.mu, "user_sigma": users.sigma,
            "item_mu": items.mu, "item_sigma": items.sigma}


def theta_step(users, items, grads, opt):
    """One optimizer step on the embedding tables, then projection."""
    opt.step(theta_dict(users, items), grads)
    project(users)
    project(items)


def build_proxy(users, items, grads, alpha):
    """Proxy tables: a plain gradient step from the current tables.

    Always an SGD step with the inner learning rate, regardless of the real
    optimizer, and never projected. The inputs are left untouched.
    """
    proxy_users = GaussianEmbeddingTable(users.mu - alpha * grads["user_mu"],
                                         users.sigma - alpha * grads["user_sigma"])
    proxy_items = GaussianEmbeddingTable(items.mu - alpha * grads["item_mu"],
                                         items.sigma - alpha * grads["item_sigma"])
    return proxy_users, proxy_items


def _tree_scale_diff(plus, minus, scale):
    if isinstance(plus, dict):
        return {k: _tree_scale_diff(plus[k], minus[k], scale) for k in plus}
    return scale * (plus - minus)


def darts_hypergradient(theta, v, alpha, eps_fd, grad_phi_fn):
    """Approximate d(outer)/d(phi) through one inner gradient step.

    ``theta`` and ``v`` are dicts of arrays (v = outer gradient at the
    proxy); ``grad_phi_fn(theta_like)`` must return the margin-net gradient
    of the inner objective, as a possibly nested dict. Estimates
    -alpha * (d^2 inner / d phi d theta) @ v by central differences with
    step eps_fd / ||v||. Returns None when v is zero.
    """
    v_norm = np.sqrt(sum(float(np.sum(a * a)) for a in v.values()))
    if v_norm == 0.0:
        return None
    eps = eps_fd / v_norm
    plus = grad_phi_fn({k: theta[k] + eps * v[k] for k in theta})
    minus = grad_phi_fn({k: theta[k] - eps * v[k] for k in theta})
    return _tree_scale_diff(plus, minus, -alpha / (2.0 * eps))


def phi_step(phis, hypergrads, lam, opt):
    """Add the 2*lam*phi decay term and take one optimizer step on all nets."""
    flat_params, flat_grads = {}, {}
    for rel, net in phis.items():
        hg = hypergrads.get(rel) if hypergrads else None
        for name, arr in net.params().items():
            g = hg[name].copy() if hg is not None else np.zeros_like(arr)
            g += 2.0 * lam * arr
            flat_params[f"{rel}.{name}"] = arr
            flat_grads[f"{rel}.{name}"] = g
    opt.step(flat_params, flat_grads)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TraceRow:
    epoch: int
    inner: float
    outer: float
    ui: float
    uu: float
    ii: float
    mean_margin: float

    def csv(self):
        return (f"{self.epoch},{self.inner!r},{self.outer!r},{self.ui!r},"
                f"{self.uu!r},{self.ii!r},{self.mean_margin!r}")


@dataclass
class TrainResult:
    users: GaussianEmbeddingTable
    items: GaussianEmbeddingTable
    phis: dict
    cfg: object
    trace: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (epoch, EvalReport)
    opt_theta: object = None
    opt_phi: object = None
    rng_states: dict = field(default_factory=dict)

    def last_eval(self):
        return self.evals[-1][1] if self.evals else None


def write_trace(path, rows, header_lines=()):
    with open(path, "w") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        f.write("epoch,inner,outer,ui,uu,ii,mean_margin\n")
        for r in rows:
            f.write(r.csv() + "\n")


def _stream(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


def _build_all_pools(relations, exclusions, universes, pool_size, seed, epoch):
    rng = _stream(seed, 5, epoch)
    return {rel: sampler.refresh_pool(exclusions[rel], universes[rel],
                                      pool_size, rng, epoch=epoch)
            for rel in relations}


def _non_finite_dump(where, batches, epoch, it):
    heads = {rel: (b.anchors[:8].tolist(), b.positives[:8].tolist(),
                   b.negatives[:8].tolist())
             for rel, b in batches.items()}
    return (f"non-finite {where} at epoch {epoch} iteration {it}; "
            f"batch heads (anchor/pos/neg): {heads}")


def train(ds, fold, cfg, neighbors=None, cache_dir=None, log=None):
    """Run the alternating procedure on one fold; returns a TrainResult.

    ``ds`` supplies entity counts; ``fold`` the per-user train/test item
    sets. Neighbor sets for the same-entity relations are built from the
    training rows (or taken from ``neighbors``/the cache). Deterministic for
    a fixed config seed.
    """
    cfg.validate()
    kind = cfg.kind()
    say = log if log is not None else (lambda msg: None)

    users = init_table(ds.n_users, cfg.h, np.random.SeedSequence([cfg.seed, 0]),
                       mu_std=cfg.mu_std, sigma0=cfg.sigma0,
                       sigma_jitter=cfg.sigma_jitter)
    items = init_table(ds.n_items, cfg.h, np.random.SeedSequence([cfg.seed, 1]),
                       mu_std=cfg.mu_std, sigma0=cfg.sigma0,
                       sigma_jitter=cfg.sigma_jitter)

    modes = {rel: cfg.margin_mode_for(rel) for rel in cfg.relations}
    phis = {}
    for r_i, rel in enumerate(cfg.relations):
        if modes[rel] == "adaptive":
            phis[rel] = init_margin_net(cfg.h, cfg.hidden, _stream(cfg.seed, 2, r_i),
                                        mode=cfg.indicator_mode)

    opt_theta = make_optimizer(cfg.optimizer, cfg.alpha)
    opt_phi = make_optimizer(cfg.optimizer, cfg.alpha)
    rng_sampler = _stream(cfg.seed, 3)
    rng_noise = _stream(cfg.seed, 4)

    # pair lists and pool exclusions per relation
    pairs = {"ui": sampler.pairs_from_rows(fold.train_rows)}
    exclusions = {"ui": fold.train_rows}
    universes = {"ui": ds.n_items}
    if any(rel in cfg.relations for rel in ("uu", "ii")):
        neighbors = dict(neighbors or {})
        if "uu" in cfg.relations and "uu" not in neighbors:
            neighbors["uu"] = simgraph.build_or_load(
                cache_dir, fold.train_rows, ds.n_items, cfg.sim_threshold,
                "user", fold.fold_index)
        if "ii" in cfg.relations and "ii" not in neighbors:
            item_rows = _transpose_rows(fold.train_rows, ds.n_items)
            neighbors["ii"] = simgraph.build_or_load(
                cache_dir, item_rows, ds.n_users, cfg.sim_threshold,
                "item", fold.fold_index)
        for rel, n_entities in (("uu", ds.n_users), ("ii", ds.n_items)):
            if rel in cfg.relations:
                nbr = neighbors[rel].neighbors
                pairs[rel] = sampler.pairs_from_rows(nbr)
                exclusions[rel] = [np.union1d(nbr[a], [a]) for a in range(n_entities)]
                universes[rel] = n_entities
                say(f"{rel}: {len(pairs[rel][0])} pairs, "
                    f"median degree {int(np.median([len(v) for v in nbr]))}")

    active_rels = [rel for rel in cfg.relations if len(pairs[rel][0]) > 0]
    if "ui" not in active_rels:
        raise ValueError("no training pairs: every user has an empty training row")
    adaptive_rels = [rel for rel in active_rels if modes[rel] == "adaptive"]

    ui_anchors, ui_positives = pairs["ui"]
    pairs_per_batch = max(1, cfg.batch_size // cfg.neg_samples)
    need_noise = kind.name == "W2_SQUARED"

    result = TrainResult(users=users, items=items, phis=phis, cfg=cfg,
                         opt_theta=opt_theta, opt_phi=opt_phi)
    pools = None
    prefetch = None  # (target_epoch, thread, box)
    has_test = any(len(t) for t in fold.test_rows)
    best_r10, stale_evals = -1.0, 0

    for epoch in range(cfg.epochs):
        if epoch % cfg.refresh_period == 0:
            if prefetch is not None and prefetch[0] == epoch:
                prefetch[1].join()
                pools = prefetch[2][0]
                prefetch = None
            else:
                pools = _build_all_pools(active_rels, exclusions, universes,
                                         cfg.pool_size, cfg.seed, epoch)
            next_refresh = epoch + cfg.refresh_period
            if not cfg.deterministic and next_refresh < cfg.epochs:
                box = [None]

                def _bg(target=next_refresh, box=box):
                    box[0] = _build_all_pools(active_rels, exclusions, universes,
                                              cfg.pool_size, cfg.seed, target)

                thread = threading.Thread(target=_bg, daemon=True)
                thread.start()
                prefetch = (next_refresh, thread, box)

        order = rng_sampler.permutation(len(ui_anchors))
        sums = {"inner": 0.0, "outer": 0.0, "ui": 0.0, "uu": 0.0, "ii": 0.0}
        margin_sum, margin_count, n_iter = 0.0, 0, 0

        for start in range(0, len(order), pairs_per_batch):
            chunk = order[start:start + pairs_per_batch]
            batches = {"ui": sampler.sample_triplets(
                "ui", ui_anchors[chunk], ui_positives[chunk], pools["ui"],
                cfg.neg_samples, rng_sampler)}
            for rel in active_rels:
                if rel == "ui":
                    continue
                a, p = pairs[rel]
                draw = rng_sampler.integers(0, len(a), size=len(chunk))
                batches[rel] = sampler.sample_triplets(
                    rel, a[draw], p[draw], pools[rel], cfg.neg_samples, rng_sampler)
            for rel, b in batches.items():
                if modes[rel] == "adaptive" and need_noise:
                    b.attach_noise(cfg.h, rng_noise)

            # inner objective at the current tables
            grads = zero_theta_grads(users, items)
            inner_total = 0.0
            for rel, b in batches.items():
                ev = batch_inner(b, users, items, kind, modes[rel],
                                 phi=phis.get(rel), indicator_mode=cfg.indicator_mode,
                                 grad_theta=True,
                                 margin_grad_to_theta=cfg.margin_grad_to_theta,
                                 out_grads=grads)
                inner_total += ev.loss
                sums[rel] += ev.loss
                if modes[rel] == "adaptive":
                    margin_sum += float(np.sum(ev.margins))
                    margin_count += len(ev.margins)
                if not np.isfinite(ev.loss):
                    raise NumericFailure(_non_finite_dump("loss", batches, epoch, n_iter))
            if any(not np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericFailure(_non_finite_dump("gradient", batches, epoch, n_iter))
            sums["inner"] += inner_total

            # margin-net update, computed from the pre-update tables
            hyper = None
            outer_total = 0.0
            if adaptive_rels and cfg.joint_margin_training:
                hyper = {}
                for rel in adaptive_rels:
                    ev = batch_inner(batches[rel], users, items, kind, "adaptive",
                                     phi=phis[rel], indicator_mode=cfg.indicator_mode,
                                     grad_phi=True)
                    hyper[rel] = ev.phi_grads
            elif adaptive_rels:
                proxy_users, proxy_items = build_proxy(users, items, grads, cfg.alpha)
                if cfg.outer_batch == "fresh":
                    outer_batches = {}
                    for rel in active_rels:
                        a, p = pairs[rel]
                        draw = rng_sampler.integers(0, len(a), size=len(chunk))
                        outer_batches[rel] = sampler.sample_triplets(
                            rel, a[draw], p[draw], pools[rel],
                            cfg.neg_samples, rng_sampler)
                else:
                    outer_batches = batches
                v = zero_theta_grads(users, items)
                for rel, b in outer_batches.items():
                    ov = batch_outer(b, proxy_users, proxy_items, kind,
                                     m=1.0, grad_theta=True, out_grads=v)
                    outer_total += ov.loss
                sums["outer"] += outer_total

                def _grad_phi(theta_arrays):
                    t_users = GaussianEmbeddingTable(theta_arrays["user_mu"],
                                                     theta_arrays["user_sigma"])
                    t_items = GaussianEmbeddingTable(theta_arrays["item_mu"],
                                                     theta_arrays["item_sigma"])
                    out = {}
                    for rel in adaptive_rels:
                        ev = batch_inner(batches[rel], t_users, t_items, kind,
                                         "adaptive", phi=phis[rel],
                                         indicator_mode=cfg.indicator_mode,
                                         grad_phi=True)
                        out[rel] = ev.phi_grads
                    return out

                hyper = darts_hypergradient(theta_dict(users, items), v,
                                            cfg.alpha, cfg.eps_fd, _grad_phi)

            theta_step(users, items, grads, opt_theta)
            if adaptive_rels:
                lam = 0.0 if cfg.joint_margin_training else cfg.lam
                phi_step(phis, hyper, lam, opt_phi)
            n_iter += 1

        result.trace.append(TraceRow(
            epoch=epoch,
            inner=sums["inner"] / n_iter,
            outer=sums["outer"] / n_iter,
            ui=sums["ui"] / n_iter,
            uu=sums["uu"] / n_iter,
            ii=sums["ii"] / n_iter,
            mean_margin=(margin_sum / margin_count) if margin_count else
                        _fixed_margin_mean(modes, active_rels),
        ))

        if has_test and ((epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
            report = evaluator.evaluate(users, items, fold, cfg.ks, kind)
            result.evals.append((epoch, report))
            k_watch = 10 if 10 in report.ks else report.ks[0]
            say(f"epoch {epoch}: inner={result.trace[-1].inner:.4f} "
                f"R@{k_watch}={report.recall[k_watch]:.4f}")
            if cfg.early_stop_patience > 0:
                r10 = report.recall[k_watch]
                if r10 > best_r10:
                    best_r10, stale_evals = r10, 0
                else:
                    stale_evals += 1
                    if stale_evals >= cfg.early_stop_patience:
                        say(f"early stop at epoch {epoch}")
                        break

    if prefetch is not None:
        prefetch[1].join()
    result.rng_states = {
        "sampler": rng_sampler.bit_generator.state,
        "noise": rng_noise.bit_generator.state,
    }
    return result


def _fixed_margin_mean(modes, active_rels):
    ms = [modes[rel][1] for rel in active_rels if modes[rel] != "adaptive"]
    return float(np.mean(ms)) if ms else 0.0


def _transpose_rows(rows, n_cols):
    """Row lists of the transposed binary matrix."""
    cols = [[] for _ in range(n_cols)]
    for r_idx, row in enumerate(rows):
        for c in row:
            cols[c].append(r_idx)
    return [np.array(sorted(c), dtype=np.int64) for c in cols]
