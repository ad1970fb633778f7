# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled training loop, the fast twin of _fallback.

Statement-for-statement mirror of _fallback._Loop: same accumulation order,
same libm calls, same draw consumption, compiled with FMA contraction off.
Given the same bit-generator state the two produce bit-identical parameter
streams.
"""

from libc.math cimport exp, log, sqrt, fabs, pow, isfinite, INFINITY, NAN

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t

import numpy as np

cdef const char *_CAPSULE = "BitGenerator"


cdef inline double _lr(long long schedule, double eta0, long long t) noexcept:
    if schedule == 0:
        return eta0 / sqrt(<double> t)
    if schedule == 1:
        return eta0 / pow(<double> t, 2.0 / 3.0)
    return eta0


cdef class _Loop:
    cdef double[::1] w, state_reward, terminal_probs, eps_draws, f_star
    cdef double[::1] target_terminal, track_item_weights, track_traj_probs
    cdef double[::1] sample_traj_probs, stop_target_traj
    cdef double[::1] out_eta, out_loss, out_gnorm, out_mings, out_gest, snap_zeta
    cdef double[::1] zeta_io, log_z_state, scatter_weights, visit_buf, term_buf
    cdef double[:, ::1] snap_w
    cdef long long[::1] out_ptr, out_edges, in_ptr, in_edges, edge_tails, edge_heads
    cdef long long[::1] topo_order, terminal_states, traj_ptr, traj_edge_list
    cdef long long[::1] traj_terminal, checkpoint_steps, out_t, out_clamp, out_eval
    cdef long long n_states, n_edges, source, objective, schedule, steps
    cdef long long batch_size, mode, stop_metric, track_kind, n_trajs, n_terminals
    cdef bint track_exact
    cdef double eta0, floor, stop_eps, z_total, zeta
    cdef bitgen_t *rng
    cdef object rng_keepalive

    def __init__(self, dict args):
        self.n_states = args["n_states"]
        self.n_edges = args["n_edges"]
        self.source = args["source"]
        self.out_ptr = args["out_ptr"]
        self.out_edges = args["out_edges"]
        self.in_ptr = args["in_ptr"]
        self.in_edges = args["in_edges"]
        self.edge_tails = args["edge_tails"]
        self.edge_heads = args["edge_heads"]
        self.topo_order = args["topo_order"]
        self.state_reward = args["state_reward"]
        self.terminal_states = args["terminal_states"]
        self.terminal_probs = args["terminal_probs"]
        self.traj_ptr = args["traj_ptr"]
        self.traj_edge_list = args["traj_edge_list"]
        self.traj_terminal = args["traj_terminal"]
        self.w = args["w"]
        self.zeta_io = args["zeta_io"]
        self.objective = args["objective"]
        self.schedule = args["schedule"]
        self.eta0 = args["eta0"]
        self.steps = args["steps"]
        self.batch_size = args["batch_size"]
        self.mode = args["mode"]
        self.eps_draws = args["eps_draws"]
        self.floor = args["floor"]
        self.track_exact = args["track_exact"]
        self.track_kind = args["track_kind"]
        self.track_item_weights = args["track_item_weights"]
        self.track_traj_probs = args["track_traj_probs"]
        self.sample_traj_probs = args["sample_traj_probs"]
        self.stop_metric = args["stop_metric"]
        self.stop_eps = args["stop_eps"]
        self.f_star = args["f_star"]
        self.z_total = args["z_total"]
        self.target_terminal = args["target_terminal"]
        self.stop_target_traj = args["stop_target_traj"]
        self.checkpoint_steps = args["checkpoint_steps"]
        self.out_t = args["out_t"]
        self.out_eta = args["out_eta"]
        self.out_loss = args["out_loss"]
        self.out_gnorm = args["out_gnorm"]
        self.out_mings = args["out_mings"]
        self.out_gest = args["out_gest"]
        self.out_clamp = args["out_clamp"]
        self.out_eval = args["out_eval"]
        self.snap_w = args["snap_w"]
        self.snap_zeta = args["snap_zeta"]
        self.n_trajs = len(self.traj_ptr) - 1 if len(self.traj_ptr) else 0
        self.n_terminals = len(self.terminal_states)
        self.log_z_state = np.zeros(self.n_states)
        self.visit_buf = np.zeros(self.n_states)
        self.term_buf = np.zeros(self.n_terminals)
        if self.objective == 0:
            self.scatter_weights = np.zeros(self.n_states)
        else:
            self.scatter_weights = np.zeros(self.n_edges)
        gen = args["rng"]
        self.rng_keepalive = gen
        capsule = gen.bit_generator.capsule
        if not PyCapsule_IsValid(capsule, _CAPSULE):
            raise ValueError("expected a numpy Generator")
        self.rng = <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE)

    cdef inline double next_double(self) noexcept:
        return self.rng.next_double(self.rng.state)

    # ---- policy caches ----

    cdef void refresh_softmax(self) noexcept:
        cdef long long s, lo, hi, k
        cdef double m, denom
        for s in range(self.n_states):
            lo = self.out_ptr[s]
            hi = self.out_ptr[s + 1]
            if lo == hi:
                continue
            m = self.w[self.out_edges[lo]]
            for k in range(lo + 1, hi):
                if self.w[self.out_edges[k]] > m:
                    m = self.w[self.out_edges[k]]
            denom = 0.0
            for k in range(lo, hi):
                denom += exp(self.w[self.out_edges[k]] - m)
            self.log_z_state[s] = m + log(denom)

    cdef inline double traj_logprob(self, long long ti) noexcept:
        cdef double lp = 0.0
        cdef long long k, e
        for k in range(self.traj_ptr[ti], self.traj_ptr[ti + 1]):
            e = self.traj_edge_list[k]
            lp += self.w[e] - self.log_z_state[self.edge_tails[e]]
        return lp

    # ---- samplers ----

    cdef long long sample_forward_edges(self, long long[::1] buf) noexcept:
        cdef long long s = self.source
        cdef long long n = 0
        cdef long long lo, hi, k, e
        cdef double u, m, total, acc
        while self.out_ptr[s] != self.out_ptr[s + 1]:
            lo = self.out_ptr[s]
            hi = self.out_ptr[s + 1]
            u = self.next_double()
            if hi - lo == 1:
                e = self.out_edges[lo]
            else:
                m = self.w[self.out_edges[lo]]
                for k in range(lo + 1, hi):
                    if self.w[self.out_edges[k]] > m:
                        m = self.w[self.out_edges[k]]
                total = 0.0
                for k in range(lo, hi):
                    total += exp(self.w[self.out_edges[k]] - m)
                acc = 0.0
                e = self.out_edges[hi - 1]
                for k in range(lo, hi):
                    acc += exp(self.w[self.out_edges[k]] - m) / total
                    if u < acc:
                        e = self.out_edges[k]
                        break
            buf[n] = e
            n += 1
            s = self.edge_heads[e]
        return n

    cdef long long sample_backward_edges(self, long long[::1] buf) noexcept:
        cdef double u = self.next_double()
        cdef double acc = 0.0
        cdef long long ti = self.n_terminals - 1
        cdef long long i, s, lo, hi, e, n, half, tmp
        for i in range(self.n_terminals):
            acc += self.terminal_probs[i]
            if u < acc:
                ti = i
                break
        s = self.terminal_states[ti]
        n = 0
        while s != self.source:
            lo = self.in_ptr[s]
            hi = self.in_ptr[s + 1]
            u = self.next_double()
            if hi - lo == 1:
                e = self.in_edges[lo]
            else:
                i = <long long> (u * (hi - lo))
                if i == hi - lo:
                    i -= 1
                e = self.in_edges[lo + i]
            buf[n] = e
            n += 1
            s = self.edge_tails[e]
        half = n // 2
        for i in range(half):
            tmp = buf[i]
            buf[i] = buf[n - 1 - i]
            buf[n - 1 - i] = tmp
        return n

    cdef long long sample_table_edges(self, long long[::1] buf) noexcept:
        cdef double u = self.next_double()
        cdef double acc = 0.0
        cdef long long ti = self.n_trajs - 1
        cdef long long i
        for i in range(self.n_trajs):
            acc += self.sample_traj_probs[i]
            if u < acc:
                ti = i
                break
        return self.copy_traj(ti, buf)

    cdef long long copy_traj(self, long long ti, long long[::1] buf) noexcept:
        cdef long long lo = self.traj_ptr[ti]
        cdef long long hi = self.traj_ptr[ti + 1]
        cdef long long k
        for k in range(lo, hi):
            buf[k - lo] = self.traj_edge_list[k]
        return hi - lo

    # ---- objective terms ----

    cdef inline double node_flow(self, long long s) noexcept:
        cdef double total = 0.0
        cdef long long k
        for k in range(self.out_ptr[s], self.out_ptr[s + 1]):
            total += exp(self.w[self.out_edges[k]])
        return total

    cdef inline double inflow(self, long long s) noexcept:
        cdef double total = 0.0
        cdef long long k
        for k in range(self.in_ptr[s], self.in_ptr[s + 1]):
            total += exp(self.w[self.in_edges[k]])
        return total

    cdef double fm_term(self, long long s, double[::1] grad, double wt,
                        double reward) noexcept:
        cdef double r = self.inflow(s)
        cdef bint terminal = self.out_ptr[s] == self.out_ptr[s + 1]
        cdef double scale
        cdef long long k, e
        if terminal:
            r -= reward
        else:
            r -= self.node_flow(s)
        scale = 2.0 * wt * r
        for k in range(self.in_ptr[s], self.in_ptr[s + 1]):
            e = self.in_edges[k]
            grad[e] += scale * exp(self.w[e])
        if not terminal:
            for k in range(self.out_ptr[s], self.out_ptr[s + 1]):
                e = self.out_edges[k]
                grad[e] -= scale * exp(self.w[e])
        return wt * r * r

    cdef double db_term(self, long long e, double[::1] grad, double wt,
                        double reward) noexcept:
        cdef long long head = self.edge_heads[e]
        cdef long long indeg = self.in_ptr[head + 1] - self.in_ptr[head]
        cdef bint terminal = self.out_ptr[head] == self.out_ptr[head + 1]
        cdef double f_head, ratio, scale
        cdef long long k, x
        if terminal:
            f_head = reward
        else:
            f_head = self.node_flow(head)
        ratio = exp(self.w[e]) * indeg / f_head
        scale = 2.0 * wt * (ratio - 1.0) * ratio
        grad[e] += scale
        if not terminal:
            for k in range(self.out_ptr[head], self.out_ptr[head + 1]):
                x = self.out_edges[k]
                grad[x] -= scale * exp(self.w[x]) / f_head
        return wt * (ratio - 1.0) * (ratio - 1.0)

    cdef (double, double) tb_term(self, long long[::1] edges, long long off,
                                  long long n, double[::1] grad, double wt,
                                  double reward) noexcept:
        cdef double lp = 0.0
        cdef double ratio, scale, denom_log
        cdef long long i, e, s, k, x
        for i in range(n):
            e = edges[off + i]
            lp += self.w[e] - self.log_z_state[self.edge_tails[e]]
        ratio = exp(lp + self.zeta - log(reward))
        scale = 2.0 * wt * (ratio - 1.0) * ratio
        for i in range(n):
            e = edges[off + i]
            s = self.edge_tails[e]
            grad[e] += scale
            denom_log = self.log_z_state[s]
            for k in range(self.out_ptr[s], self.out_ptr[s + 1]):
                x = self.out_edges[k]
                grad[x] -= scale * exp(self.w[x] - denom_log)
        return wt * (ratio - 1.0) * (ratio - 1.0), scale

    # ---- exact metrics ----

    cdef void visitation_terminal(self, double[::1] out_probs) noexcept:
        cdef long long i, s, lo, hi, k, e
        for i in range(self.n_states):
            self.visit_buf[i] = 0.0
        self.visit_buf[self.source] = 1.0
        for i in range(self.n_states):
            s = self.topo_order[i]
            lo = self.out_ptr[s]
            hi = self.out_ptr[s + 1]
            if lo == hi or self.visit_buf[s] == 0.0:
                continue
            for k in range(lo, hi):
                e = self.out_edges[k]
                self.visit_buf[self.edge_heads[e]] += self.visit_buf[s] * exp(
                    self.w[e] - self.log_z_state[s]
                )
        for i in range(self.n_terminals):
            out_probs[i] = self.visit_buf[self.terminal_states[i]]

    cdef double stop_value(self) noexcept:
        cdef double total = 0.0
        cdef long long i, e, ti
        if self.stop_metric == 1:
            self.visitation_terminal(self.term_buf)
            for i in range(self.n_terminals):
                total += fabs(self.term_buf[i] - self.target_terminal[i])
            return 0.5 * total
        if self.stop_metric == 2:
            for e in range(self.n_edges):
                total += fabs(exp(self.w[e]) - self.f_star[e])
            return total / (2.0 * self.z_total)
        if self.stop_metric == 3:
            for ti in range(self.n_trajs):
                total += fabs(exp(self.traj_logprob(ti)) - self.stop_target_traj[ti])
            return 0.5 * total
        return INFINITY

    cdef (double, double, double) tracked_loss_grad(self, double[::1] grad) noexcept:
        cdef double loss = 0.0
        cdef double gz = 0.0
        cdef double norm2 = 0.0
        cdef double p, share, term, dz
        cdef long long e, ti, length, k, s, i, scatter_len
        cdef double[::1] weights
        for e in range(self.n_edges):
            grad[e] = 0.0
        if self.objective == 2:
            if self.track_kind == 1:
                for ti in range(self.n_trajs):
                    p = exp(self.traj_logprob(ti))
                    term, dz = self.tb_term(
                        self.traj_edge_list, self.traj_ptr[ti],
                        self.traj_ptr[ti + 1] - self.traj_ptr[ti], grad, p,
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
                        self.traj_edge_list, self.traj_ptr[ti],
                        self.traj_ptr[ti + 1] - self.traj_ptr[ti], grad, p,
                        self.state_reward[self.traj_terminal[ti]],
                    )
                    loss += term
                    gz += dz
        else:
            weights = self.track_item_weights
            if self.track_kind == 1:
                weights = self.scatter_weights
                scatter_len = len(weights)
                for i in range(scatter_len):
                    weights[i] = 0.0
                for ti in range(self.n_trajs):
                    p = exp(self.traj_logprob(ti))
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
                        loss += self.db_term(
                            e, grad, weights[e], self.state_reward[self.edge_heads[e]]
                        )
        for e in range(self.n_edges):
            norm2 += grad[e] * grad[e]
        norm2 += gz * gz
        return loss, gz, norm2

    # ---- the loop ----

    def run(self):
        cdef double[::1] grad = np.zeros(self.n_edges)
        cdef double[::1] track_grad = np.zeros(self.n_edges)
        cdef long long[::1] traj_buf = np.zeros(self.n_states, dtype=np.int64)
        cdef long long[:, ::1] batch_edges = np.zeros(
            (self.batch_size, self.n_states), dtype=np.int64
        )
        cdef long long[::1] batch_len = np.zeros(self.batch_size, dtype=np.int64)

        cdef double min_grad_sq = INFINITY
        cdef double g_est = 0.0
        cdef long long clamp_count = 0
        cdef long long eval_count = 0
        cdef long long rows = 0
        cdef long long ck = 0
        cdef long long stop_step = 0
        cdef long long diverged_step = 0
        cdef bint has_noise = len(self.eps_draws) > 0
        cdef bint exhaustive = self.mode == 4
        cdef bint replay = self.mode == 5

        cdef long long t = 0
        cdef long long b, i, n, e, n_items, terminal_state
        cdef double eta, gz, loss, wt, reward, norm2, gn
        cdef double term, dz, tr_loss, tr_gz, tr_norm2
        cdef double loss_out = NAN
        cdef double gnorm_out = NAN
        cdef bint finite, force, at_ck

        self.zeta = self.zeta_io[0]

        while t < self.steps:
            t += 1
            eta = _lr(self.schedule, self.eta0, t)
            self.refresh_softmax()

            for e in range(self.n_edges):
                grad[e] = 0.0
            gz = 0.0
            loss = 0.0

            if exhaustive:
                loss, gz, tr_norm2 = self.tracked_loss_grad(track_grad)
                for e in range(self.n_edges):
                    grad[e] = track_grad[e]
            else:
                for b in range(self.batch_size):
                    if replay:
                        n = self.copy_traj(t - 1, traj_buf)
                    elif self.mode == 0:
                        n = self.sample_forward_edges(traj_buf)
                    elif self.mode == 1:
                        n = self.sample_backward_edges(traj_buf)
                    else:
                        n = self.sample_table_edges(traj_buf)
                    for i in range(n):
                        batch_edges[b, i] = traj_buf[i]
                    batch_len[b] = n
                if self.objective == 2:
                    n_items = self.batch_size
                else:
                    n_items = 0
                    for b in range(self.batch_size):
                        n_items += batch_len[b]
                wt = 1.0 / n_items
                for b in range(self.batch_size):
                    n = batch_len[b]
                    terminal_state = self.edge_heads[batch_edges[b, n - 1]]
                    reward = self.state_reward[terminal_state]
                    if has_noise:
                        reward = reward + self.eps_draws[(t - 1) * self.batch_size + b]
                        eval_count += 1
                        if reward < self.floor:
                            reward = self.floor
                            clamp_count += 1
                    if self.objective == 2:
                        term, dz = self.tb_term(batch_edges[b], 0, n, grad, wt, reward)
                        loss += term
                        gz += dz
                    elif self.objective == 0:
                        for i in range(n):
                            loss += self.fm_term(
                                self.edge_heads[batch_edges[b, i]], grad, wt, reward
                            )
                    else:
                        for i in range(n):
                            loss += self.db_term(batch_edges[b, i], grad, wt, reward)

            norm2 = 0.0
            for e in range(self.n_edges):
                norm2 += grad[e] * grad[e]
            norm2 += gz * gz
            gn = sqrt(norm2)
            if gn > g_est:
                g_est = gn

            for e in range(self.n_edges):
                self.w[e] = self.w[e] - eta * grad[e]
            self.zeta = self.zeta - eta * gz

            finite = isfinite(self.zeta)
            if finite:
                for e in range(self.n_edges):
                    if not isfinite(self.w[e]):
                        finite = False
                        break
            if not finite:
                diverged_step = t
            else:
                self.refresh_softmax()
                if self.track_exact:
                    tr_loss, tr_gz, tr_norm2 = self.tracked_loss_grad(track_grad)
                    if tr_norm2 < min_grad_sq:
                        min_grad_sq = tr_norm2
                    loss_out = tr_loss
                    gnorm_out = sqrt(tr_norm2)
                else:
                    loss_out = NAN
                    gnorm_out = NAN
                if self.stop_metric != 0 and self.stop_value() <= self.stop_eps:
                    stop_step = t

            force = (diverged_step != 0) or (stop_step != 0) or (t == self.steps)
            at_ck = ck < len(self.checkpoint_steps) and t == self.checkpoint_steps[ck]
            if at_ck or force:
                if not (rows > 0 and self.out_t[rows - 1] == t):
                    self.out_t[rows] = t
                    self.out_eta[rows] = eta
                    self.out_loss[rows] = loss_out if (self.track_exact and finite) else NAN
                    self.out_gnorm[rows] = gnorm_out if (self.track_exact and finite) else NAN
                    self.out_mings[rows] = min_grad_sq
                    self.out_gest[rows] = g_est
                    self.out_clamp[rows] = clamp_count
                    self.out_eval[rows] = eval_count
                    for e in range(self.n_edges):
                        self.snap_w[rows, e] = self.w[e]
                    self.snap_zeta[rows] = self.zeta
                    rows += 1
                if at_ck:
                    ck += 1
            if force:
                break

        self.zeta_io[0] = self.zeta
        return rows, stop_step, diverged_step, min_grad_sq, g_est, clamp_count, eval_count


def run_training_loop(dict args):
    """args is the flat dict assembled by the trainer; see trainer._kernel_args."""
    return _Loop(args).run()
