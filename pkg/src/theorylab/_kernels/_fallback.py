"""Pure-Python training loop, the reference twin of the compiled kernel.

Every arithmetic decision here is mirrored exactly in the compiled version:
scalar libm exp/log, sequential accumulation in edge order, one uniform draw
per sampler decision, truncating int casts.  Given the same bit generator
state the two produce bit-identical parameter streams, so artifacts do not
depend on which implementation is installed.

exp/log go through wrappers that reproduce C semantics (inf on overflow
instead of raising); the compiled twin calls libm directly.
"""

from __future__ import annotations

import math

INF = math.inf


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return INF


def _log(x: float) -> float:
    if x <= 0.0:
        return -INF if x == 0.0 else math.nan
    return math.log(x)


def lr_value(schedule: int, eta0: float, t: int) -> float:
    if schedule == 0:
        return eta0 / math.sqrt(t)
    if schedule == 1:
        return eta0 / t ** (2.0 / 3.0)
    return eta0


def _pick(cum_probs, u: float) -> int:
    acc = 0.0
    for i in range(len(cum_probs)):
        acc += cum_probs[i]
        if u < acc:
            return i
    return len(cum_probs) - 1


class _Loop:
    """One training run; state lives in plain attributes, arrays are numpy
    float64/int64 buffers shared with the caller."""

    def __init__(self, args: dict):
        self.__dict__.update(args)
        self.n_trajs = len(self.traj_ptr) - 1 if len(self.traj_ptr) else 0
        # softmax caches, rebuilt each time params change
        self.log_z_state = [0.0] * self.n_states

    # ---- policy caches ----

    def refresh_softmax(self) -> None:
        w, out_ptr, out_edges = self.w, self.out_ptr, self.out_edges
        for s in range(self.n_states):
            lo, hi = out_ptr[s], out_ptr[s + 1]
            if lo == hi:
                continue
            m = w[out_edges[lo]]
            for k in range(lo + 1, hi):
                if w[out_edges[k]] > m:
                    m = w[out_edges[k]]
            denom = 0.0
            for k in range(lo, hi):
                denom += _exp(w[out_edges[k]] - m)
            self.log_z_state[s] = m + _log(denom)

    def traj_logprob(self, ti: int) -> float:
        lp = 0.0
        for k in range(self.traj_ptr[ti], self.traj_ptr[ti + 1]):
            e = self.traj_edge_list[k]
            lp += self.w[e] - self.log_z_state[self.edge_tails[e]]
        return lp

    # ---- samplers (bit-compatible with the compiled twin) ----

    def sample_forward_edges(self, buf) -> int:
        s = self.source
        n = 0
        w, out_ptr, out_edges = self.w, self.out_ptr, self.out_edges
        while out_ptr[s] != out_ptr[s + 1]:
            lo, hi = out_ptr[s], out_ptr[s + 1]
            u = self.next_double()
            if hi - lo == 1:
                e = out_edges[lo]
            else:
                m = w[out_edges[lo]]
                for k in range(lo + 1, hi):
                    if w[out_edges[k]] > m:
                        m = w[out_edges[k]]
                total = 0.0
                for k in range(lo, hi):
                    total += _exp(w[out_edges[k]] - m)
                acc = 0.0
                e = out_edges[hi - 1]
                for k in range(lo, hi):
                    acc += _exp(w[out_edges[k]] - m) / total
                    if u < acc:
                        e = out_edges[k]
                        break
                else:
                    e = out_edges[hi - 1]
            buf[n] = e
            n += 1
            s = self.edge_heads[e]
        return n

    def sample_backward_edges(self, buf) -> int:
        u = self.next_double()
        acc = 0.0
        ti = len(self.terminal_states) - 1
        for i in range(len(self.terminal_states)):
            acc += self.terminal_probs[i]
            if u < acc:
                ti = i
                break
        s = self.terminal_states[ti]
        n = 0
        while s != self.source:
            lo, hi = self.in_ptr[s], self.in_ptr[s + 1]
            u = self.next_double()
            if hi - lo == 1:
                e = self.in_edges[lo]
            else:
                i = int(u * (hi - lo))
                if i == hi - lo:
                    i -= 1
                e = self.in_edges[lo + i]
            buf[n] = e
            n += 1
            s = self.edge_tails[e]
        # reverse into forward order
        for i in range(n // 2):
            buf[i], buf[n - 1 - i] = buf[n - 1 - i], buf[i]
        return n

    def sample_table_edges(self, buf, probs) -> int:
        u = self.next_double()
        acc = 0.0
        ti = self.n_trajs - 1
        for i in range(self.n_trajs):
            acc += probs[i]
            if u < acc:
                ti = i
                break
        return self.copy_traj(ti, buf)

    def copy_traj(self, ti: int, buf) -> int:
        lo, hi = self.traj_ptr[ti], self.traj_ptr[ti + 1]
        for k in range(lo, hi):
            buf[k - lo] = self.traj_edge_list[k]
        return hi - lo

    # ---- objective terms over one trajectory's items ----

    def node_flow(self, s: int) -> float:
        lo, hi = self.out_ptr[s], self.out_ptr[s + 1]
        total = 0.0
        for k in range(lo, hi):
            total += _exp(self.w[self.out_edges[k]])
        return total

    def inflow(self, s: int) -> float:
        lo, hi = self.in_ptr[s], self.in_ptr[s + 1]
        total = 0.0
        for k in range(lo, hi):
            total += _exp(self.w[self.in_edges[k]])
        return total

    def fm_term(self, s: int, grad, wt: float, reward: float) -> float:
        """Add wt * d(residual^2)/dw into grad; return wt * residual^2."""
        r = self.inflow(s)
        terminal = self.out_ptr[s] == self.out_ptr[s + 1]
        if terminal:
            r -= reward
        else:
            r -= self.node_flow(s)
        scale = 2.0 * wt * r
        for k in range(self.in_ptr[s], self.in_ptr[s + 1]):
            e = self.in_edges[k]
            grad[e] += scale * _exp(self.w[e])
        if not terminal:
            for k in range(self.out_ptr[s], self.out_ptr[s + 1]):
                e = self.out_edges[k]
                grad[e] -= scale * _exp(self.w[e])
        return wt * r * r

    def db_term(self, e: int, grad, wt: float, reward: float) -> float:
        head = self.edge_heads[e]
        indeg = self.in_ptr[head + 1] - self.in_ptr[head]
        terminal = self.out_ptr[head] == self.out_ptr[head + 1]
        f_head = reward if terminal else self.node_flow(head)
        ratio = _exp(self.w[e]) * indeg / f_head
        scale = 2.0 * wt * (ratio - 1.0) * ratio
        grad[e] += scale
        if not terminal:
            for k in range(self.out_ptr[head], self.out_ptr[head + 1]):
                x = self.out_edges[k]
                grad[x] -= scale * _exp(self.w[x]) / f_head
        return wt * (ratio - 1.0) * (ratio - 1.0)

    def tb_term(self, edges, n: int, grad, wt: float, reward: float) -> tuple[float, float]:
        """Returns (wt * term, d(term)/dzeta contribution)."""
        lp = 0.0
        for i in range(n):
            e = edges[i]
            lp += self.w[e] - self.log_z_state[self.edge_tails[e]]
        ratio = _exp(lp + self.zeta - _log(reward))
        scale = 2.0 * wt * (ratio - 1.0) * ratio
        for i in range(n):
            e = edges[i]
            s = self.edge_tails[e]
            grad[e] += scale
            denom_log = self.log_z_state[s]
            for k in range(self.out_ptr[s], self.out_ptr[s + 1]):
                x = self.out_edges[k]
                grad[x] -= scale * _exp(self.w[x] - denom_log)
        return wt * (ratio - 1.0) * (ratio - 1.0), scale

    # ---- exact metrics at current params ----

    def visitation_terminal(self, out_probs) -> None:
        visit = [0.0] * self.n_states
        visit[self.source] = 1.0
        for i in range(self.n_states):
            s = self.topo_order[i]
            lo, hi = self.out_ptr[s], self.out_ptr[s + 1]
            if lo == hi or visit[s] == 0.0:
                continue
            for k in range(lo, hi):
                e = self.out_edges[k]
                out_probs_contrib = visit[s] * _exp(self.w[e] - self.log_z_state[s])
                visit[self.edge_heads[e]] += out_probs_contrib
        for i in range(len(self.terminal_states)):
            out_probs[i] = visit[self.terminal_states[i]]

    def stop_value(self) -> float:
        if self.stop_metric == 1:  # terminal tv vs target
            probs = [0.0] * len(self.terminal_states)
            self.visitation_terminal(probs)
            total = 0.0
            for i in range(len(probs)):
                total += abs(probs[i] - self.target_terminal[i])
            return 0.5 * total
        if self.stop_metric == 2:  # flow tv vs reference
            total = 0.0
            for e in range(self.n_edges):
                total += abs(_exp(self.w[e]) - self.f_star[e])
            return total / (2.0 * self.z_total)
        if self.stop_metric == 3:  # trajectory tv vs table target
            total = 0.0
            for ti in range(self.n_trajs):
                total += abs(_exp(self.traj_logprob(ti)) - self.stop_target_traj[ti])
            return 0.5 * total
        return INF

    def tracked_loss_grad(self, grad) -> tuple[float, float, float]:
        """Exact loss and gradient under the tracking distribution.

        Returns (loss, grad_zeta, grad_norm_sq); grad is overwritten.
        """
        for e in range(self.n_edges):
            grad[e] = 0.0
        loss = 0.0
        gz = 0.0
        if self.objective == 2:
            if self.track_kind == 1:
                for ti in range(self.n_trajs):
                    p = _exp(self.traj_logprob(ti))
                    term, dz = self.tb_term(
                        self.traj_edge_list[self.traj_ptr[ti] : self.traj_ptr[ti + 1]],
                        self.traj_ptr[ti + 1] - self.traj_ptr[ti],
                        grad,
                        p,
                        self.state_reward[self.traj_terminal[ti]],
                    )
                    loss += term
                    gz += dz
            else:
                for ti in range(self.n_trajs):
                    p = self.track_traj_probs[ti]
                    if p == 0.0:
                        continue
                    term, dz = self.tb_term(
                        self.traj_edge_list[self.traj_ptr[ti] : self.traj_ptr[ti + 1]],
                        self.traj_ptr[ti + 1] - self.traj_ptr[ti],
                        grad,
                        p,
                        self.state_reward[self.traj_terminal[ti]],
                    )
                    loss += term
                    gz += dz
        else:
            weights = self.track_item_weights
            if self.track_kind == 1:
                weights = self.scatter_weights
                for i in range(len(weights)):
                    weights[i] = 0.0
                for ti in range(self.n_trajs):
                    p = _exp(self.traj_logprob(ti))
                    length = self.traj_ptr[ti + 1] - self.traj_ptr[ti]
                    share = p / length
                    for k in range(self.traj_ptr[ti], self.traj_ptr[ti + 1]):
                        e = self.traj_edge_list[k]
                        if self.objective == 0:
                            weights[self.edge_heads[e]] += share
                        else:
                            weights[e] += share
            if self.objective == 0:
                for s in range(self.n_states):
                    if weights[s] != 0.0:
                        loss += self.fm_term(s, grad, weights[s], self.state_reward[s])
            else:
                for e in range(self.n_edges):
                    if weights[e] != 0.0:
                        loss += self.db_term(e, grad, weights[e], self.state_reward[self.edge_heads[e]])
        norm2 = 0.0
        for e in range(self.n_edges):
            norm2 += grad[e] * grad[e]
        norm2 += gz * gz
        return loss, gz, norm2

    # ---- the loop ----

    def run(self) -> tuple[int, int, int, float, float, int, int]:
        self.zeta = float(self.zeta_io[0])
        grad = [0.0] * self.n_edges
        track_grad = [0.0] * self.n_edges
        traj_buf = [0] * self.n_states
        batch_edges = [[0] * self.n_states for _ in range(self.batch_size)]
        batch_len = [0] * self.batch_size
        if self.objective == 0:
            self.scatter_weights = [0.0] * self.n_states
        else:
            self.scatter_weights = [0.0] * self.n_edges

        min_grad_sq = INF
        g_est = 0.0
        clamp_count = 0
        eval_count = 0
        rows = 0
        ck = 0
        stop_step = 0
        diverged_step = 0
        has_noise = len(self.eps_draws) > 0
        exhaustive = self.mode == 4
        replay = self.mode == 5

        t = 0
        while t < self.steps:
            t += 1
            eta = lr_value(self.schedule, self.eta0, t)
            self.refresh_softmax()

            for e in range(self.n_edges):
                grad[e] = 0.0
            gz = 0.0
            loss = 0.0

            if exhaustive:
                loss, gz, _n2 = self.tracked_loss_grad(track_grad)
                for e in range(self.n_edges):
                    grad[e] = track_grad[e]
            else:
                # draw the batch
                for b in range(self.batch_size):
                    if replay:
                        n = self.copy_traj(t - 1, traj_buf)
                    elif self.mode == 0:
                        n = self.sample_forward_edges(traj_buf)
                    elif self.mode == 1:
                        n = self.sample_backward_edges(traj_buf)
                    else:
                        n = self.sample_table_edges(traj_buf, self.sample_traj_probs)
                    for i in range(n):
                        batch_edges[b][i] = traj_buf[i]
                    batch_len[b] = n
                # effective rewards per batch item
                if self.objective == 2:
                    n_items = self.batch_size
                else:
                    n_items = 0
                    for b in range(self.batch_size):
                        n_items += batch_len[b]
                wt = 1.0 / n_items
                for b in range(self.batch_size):
                    n = batch_len[b]
                    terminal_state = self.edge_heads[batch_edges[b][n - 1]]
                    reward = self.state_reward[terminal_state]
                    if has_noise:
                        reward = reward + self.eps_draws[(t - 1) * self.batch_size + b]
                        eval_count += 1
                        if reward < self.floor:
                            reward = self.floor
                            clamp_count += 1
                    if self.objective == 2:
                        term, dz = self.tb_term(batch_edges[b], n, grad, wt, reward)
                        loss += term
                        gz += dz
                    elif self.objective == 0:
                        for i in range(n):
                            s = self.edge_heads[batch_edges[b][i]]
                            loss += self.fm_term(s, grad, wt, reward)
                    else:
                        for i in range(n):
                            loss += self.db_term(batch_edges[b][i], grad, wt, reward)

            norm2 = 0.0
            for e in range(self.n_edges):
                norm2 += grad[e] * grad[e]
            norm2 += gz * gz
            gn = math.sqrt(norm2)
            if gn > g_est:
                g_est = gn

            for e in range(self.n_edges):
                self.w[e] = self.w[e] - eta * grad[e]
            self.zeta = self.zeta - eta * gz

            finite = math.isfinite(self.zeta)
            if finite:
                for e in range(self.n_edges):
                    if not math.isfinite(self.w[e]):
                        finite = False
                        break
            if not finite:
                diverged_step = t
            else:
                self.refresh_softmax()
                if self.track_exact:
                    tr_loss, _tr_gz, tr_norm2 = self.tracked_loss_grad(track_grad)
                    if tr_norm2 < min_grad_sq:
                        min_grad_sq = tr_norm2
                    loss_out, gnorm_out = tr_loss, math.sqrt(tr_norm2)
                else:
                    loss_out, gnorm_out = math.nan, math.nan
                if self.stop_metric != 0 and self.stop_value() <= self.stop_eps:
                    stop_step = t

            force = diverged_step or stop_step or t == self.steps
            at_ck = ck < len(self.checkpoint_steps) and t == self.checkpoint_steps[ck]
            if at_ck or force:
                if not (rows and self.out_t[rows - 1] == t):
                    self.out_t[rows] = t
                    self.out_eta[rows] = eta
                    self.out_loss[rows] = loss_out if self.track_exact and finite else math.nan
                    self.out_gnorm[rows] = gnorm_out if self.track_exact and finite else math.nan
                    self.out_mings[rows] = min_grad_sq
                    self.out_gest[rows] = g_est
                    self.out_clamp[rows] = clamp_count
                    self.out_eval[rows] = eval_count
                    for e in range(self.n_edges):
                        self.snap_w[rows][e] = self.w[e]
                    self.snap_zeta[rows] = self.zeta
                    rows += 1
                if at_ck:
                    ck += 1
            if force:
                break

        self.zeta_io[0] = self.zeta
        return rows, stop_step, diverged_step, min_grad_sq, g_est, clamp_count, eval_count


def run_training_loop(args: dict) -> tuple[int, int, int, float, float, int, int]:
    """args is the flat dict assembled by the trainer; see trainer._kernel_args."""
    loop = _Loop(args)
    rng = args["rng"]
    loop.next_double = rng.random
    return loop.run()
