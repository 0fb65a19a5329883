"""Jitted inner loops: event generation and replay on flat state arrays.

Everything here is private plumbing behind the engine/coupling/estimation
APIs.  Event kinds are 0 death mark, 1 recovery mark, 2 birth arrow,
3 infection arrow.  Replay behavior is parametrized by a per-process rule
table so a single immutable event sequence can be reinterpreted by several
coupled processes:

  recovery role: 0 recover (2->1), 1 death (->0), 2 ignore
  arrow roles:   0 none, 1 birth, 2 infect, 3 birth+infect combined
                 (target := max(target, source)), 4 birth of a healthy
                 offspring, 5 heal (source 1 flips target 2->1),
                 6 kill target

An arrow with thinning label u gets role r1 if u < t1, r2 if u < t2 and r3
otherwise; birth-kind and infection-kind arrows have separate tables.  With
box mode on, arrows whose target lies outside the reduced neighborhood of
the source are overridden: birth arrows deliver a healthy offspring and
infection arrows are dropped.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
TWO_NEG53 = 2.0 ** -53

KIND_DEATH = 0
KIND_RECOVERY = 1
KIND_BIRTH = 2
KIND_INFECTION = 3

ROLE_NONE = 0
ROLE_BIRTH = 1
ROLE_INFECT = 2
ROLE_COMBINED = 3
ROLE_BIRTH_HEALTHY = 4
ROLE_HEAL = 5
ROLE_KILL = 6

REC_RECOVER = 0
REC_DEATH = 1
REC_NONE = 2

# rule array layout: roles[0]=recovery role, roles[1:4]=birth-arrow roles,
# roles[4:7]=infection-arrow roles, roles[7]=box flag, roles[8]=box half-side l
# thresholds: thr[0:2]=birth-arrow cuts, thr[2:4]=infection-arrow cuts


def make_rules(recovery=REC_RECOVER,
               birth=(2.0, 2.0, ROLE_BIRTH, ROLE_BIRTH, ROLE_BIRTH),
               infection=(2.0, 2.0, ROLE_INFECT, ROLE_INFECT, ROLE_INFECT),
               box_l=0):
    """Pack a replay rule table; birth/infection = (t1, t2, r1, r2, r3)."""
    thr = np.array([birth[0], birth[1], infection[0], infection[1]], dtype=np.float64)
    roles = np.array(
        [recovery, birth[2], birth[3], birth[4],
         infection[2], infection[3], infection[4],
         1 if box_l else 0, box_l],
        dtype=np.int64,
    )
    return thr, roles


STANDARD_RULES = make_rules()


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _next_unit(s):
    s = s + GOLDEN
    return s, ((_mix64(s) >> np.uint64(11)) + np.float64(0.5)) * TWO_NEG53


@njit(cache=True)
def mix64_py(z):
    return _mix64(np.uint64(z))


@njit(cache=True, inline="always")
def _neighbor(src, k, dim, side, L):
    # k-th lexicographic nonzero offset in (-L..L)^d, applied mod side
    m = 2 * L + 1
    half = (m ** dim - 1) // 2
    kk = k if k < half else k + 1
    rem = src
    flat = 0
    mult = 1
    for _ in range(dim):
        c = rem % side
        rem //= side
        off = (kk % m) - L
        kk //= m
        nc = (c + off) % side
        flat += nc * mult
        mult *= side
    return flat


@njit(cache=True)
def gen_events(state0, t0, horizon, dim, side, L,
               r_death, r_recover, r_birth, r_infect,
               t_out, kind_out, src_out, tgt_out, lab_out):
    """Fill buffers with the next events after (state0, t0).

    Returns (n, rng_state, t, done): done is False when the buffers filled
    up before the horizon was reached; call again with the returned state.
    Per-event draw order: gap, category, vertex, [arrow target], label.
    """
    V = side ** dim
    per = r_death + r_recover + r_birth + r_infect
    total = V * per
    c1 = r_death / per
    c2 = (r_death + r_recover) / per
    c3 = (r_death + r_recover + r_birth) / per
    N = (2 * L + 1) ** dim - 1
    s = state0
    t = t0
    n = 0
    cap = t_out.shape[0]
    while n < cap:
        s, u = _next_unit(s)
        t += -np.log(1.0 - u) / total
        if t > horizon:
            return n, s, t, True
        s, uc = _next_unit(s)
        s, uv = _next_unit(s)
        x = int(uv * V)
        if x >= V:
            x = V - 1
        if uc < c2:
            kind = KIND_DEATH if uc < c1 else KIND_RECOVERY
            y = -1
        else:
            s, un = _next_unit(s)
            k = int(un * N)
            if k >= N:
                k = N - 1
            y = _neighbor(x, k, dim, side, L)
            kind = KIND_BIRTH if uc < c3 else KIND_INFECTION
        s, ul = _next_unit(s)
        t_out[n] = t
        kind_out[n] = kind
        src_out[n] = x
        tgt_out[n] = y
        lab_out[n] = ul
        n += 1
    return n, s, t, False


@njit(cache=True, inline="always")
def _in_reduced(x, y, dim, side, l, L):
    # box-pair sup-distance test on the torus; exact for contiguous boxes
    nb = side // (2 * l)
    half = side // 2
    rx = x
    ry = y
    for _ in range(dim):
        cx = rx % side
        rx //= side
        cy = ry % side
        ry //= side
        bx = ((cx + l - 1) // (2 * l)) % nb
        by = ((cy + l - 1) // (2 * l)) % nb
        d = bx - by
        if d < 0:
            d = -d
        if nb - d < d:
            d = nb - d
        md = 2 * l * d + 2 * l - 1
        if md > half:
            md = half
        if md > L:
            return False
    return True


@njit(cache=True, inline="always")
def _apply(state, kind, x, y, u, thr, roles, dim, side, L):
    """Apply one event under a rule table; returns (vertex, old, new) with
    vertex = -1 when nothing changed."""
    if kind == KIND_DEATH:
        if state[x] != 0:
            old = state[x]
            state[x] = 0
            return x, old, np.uint8(0)
        return -1, np.uint8(0), np.uint8(0)
    if kind == KIND_RECOVERY:
        rr = roles[0]
        if rr == REC_RECOVER:
            if state[x] == 2:
                state[x] = 1
                return x, np.uint8(2), np.uint8(1)
        elif rr == REC_DEATH:
            if state[x] != 0:
                old = state[x]
                state[x] = 0
                return x, old, np.uint8(0)
        return -1, np.uint8(0), np.uint8(0)
    # arrow
    if kind == KIND_BIRTH:
        role = roles[1] if u < thr[0] else (roles[2] if u < thr[1] else roles[3])
    else:
        role = roles[4] if u < thr[2] else (roles[5] if u < thr[3] else roles[6])
    if roles[7] == 1 and not _in_reduced(x, y, dim, side, roles[8], L):
        role = ROLE_BIRTH_HEALTHY if kind == KIND_BIRTH else ROLE_NONE
    if role == ROLE_BIRTH:
        if state[x] != 0 and state[y] == 0:
            state[y] = state[x]
            return y, np.uint8(0), state[y]
    elif role == ROLE_INFECT:
        if state[x] == 2 and state[y] == 1:
            state[y] = 2
            return y, np.uint8(1), np.uint8(2)
    elif role == ROLE_COMBINED:
        sx = state[x]
        sy = state[y]
        if sx > sy:
            if sy == 0:
                state[y] = sx
                return y, np.uint8(0), sx
            if sy == 1 and sx == 2:
                state[y] = 2
                return y, np.uint8(1), np.uint8(2)
    elif role == ROLE_BIRTH_HEALTHY:
        if state[x] != 0 and state[y] == 0:
            state[y] = 1
            return y, np.uint8(0), np.uint8(1)
    elif role == ROLE_HEAL:
        if state[x] == 1 and state[y] == 2:
            state[y] = 1
            return y, np.uint8(2), np.uint8(1)
    elif role == ROLE_KILL:
        if state[y] != 0:
            old = state[y]
            state[y] = 0
            return y, old, np.uint8(0)
    return -1, np.uint8(0), np.uint8(0)


@njit(cache=True)
def count_states(state):
    occ = 0
    inf = 0
    for i in range(state.shape[0]):
        if state[i] != 0:
            occ += 1
            if state[i] == 2:
                inf += 1
    return occ, inf


@njit(cache=True)
def replay(n, times, kinds, srcs, tgts, labs, state, thr, roles,
           dim, side, L, occ0, inf0, stop_mode,
           log_on, log_t, log_v, log_old, log_new, log_eidx, eidx0):
    """Replay events in order, mutating state.

    stop_mode: 0 run all, 1 stop once no vertex is occupied, 2 stop once no
    vertex is infected.  Returns (nlog, processed, occ, inf).
    """
    occ = occ0
    inf = inf0
    nlog = 0
    for i in range(n):
        v, old, new = _apply(state, kinds[i], srcs[i], tgts[i], labs[i],
                             thr, roles, dim, side, L)
        if v >= 0:
            if old != 0:
                occ -= 1
                if old == 2:
                    inf -= 1
            if new != 0:
                occ += 1
                if new == 2:
                    inf += 1
            if log_on:
                log_t[nlog] = times[i]
                log_v[nlog] = v
                log_old[nlog] = old
                log_new[nlog] = new
                log_eidx[nlog] = eidx0 + i
                nlog += 1
            if stop_mode == 1 and occ == 0:
                return nlog, i + 1, occ, inf
            if stop_mode == 2 and inf == 0:
                return nlog, i + 1, occ, inf
    return nlog, n, occ, inf


@njit(cache=True)
def replay_pair(n, times, kinds, srcs, tgts, labs,
                state_a, state_b, thr_a, roles_a, thr_b, roles_b,
                dim, side, L, check_mode, stop_on_violation,
                log_on,
                la_t, la_v, la_old, la_new, la_eidx,
                lb_t, lb_v, lb_old, lb_new, lb_eidx, eidx0):
    """Replay one event sequence through two rule tables with an ordering
    check at the event's focus vertex after every event.

    check_mode: 1 pointwise state_a <= state_b; 2 additionally occupied
    equality; 3 infected-set inclusion only (a infected => b infected).
    Returns (violation_index, nlog_a, nlog_b, processed); violation_index is
    the local index of the first violated event, -1 if the ordering held.
    Unless stop_on_violation, the replay runs to completion so both delta
    logs cover the whole sequence.
    """
    na = 0
    nb = 0
    viol = -1
    for i in range(n):
        va, olda, newa = _apply(state_a, kinds[i], srcs[i], tgts[i], labs[i],
                                thr_a, roles_a, dim, side, L)
        vb, oldb, newb = _apply(state_b, kinds[i], srcs[i], tgts[i], labs[i],
                                thr_b, roles_b, dim, side, L)
        if log_on:
            if va >= 0:
                la_t[na] = times[i]
                la_v[na] = va
                la_old[na] = olda
                la_new[na] = newa
                la_eidx[na] = eidx0 + i
                na += 1
            if vb >= 0:
                lb_t[nb] = times[i]
                lb_v[nb] = vb
                lb_old[nb] = oldb
                lb_new[nb] = newb
                lb_eidx[nb] = eidx0 + i
                nb += 1
        if viol < 0:
            f = srcs[i] if tgts[i] < 0 else tgts[i]
            sa = state_a[f]
            sb = state_b[f]
            bad = False
            if check_mode == 3:
                bad = sa == 2 and sb != 2
            else:
                bad = sa > sb
                if not bad and check_mode == 2 and (sa != 0) != (sb != 0):
                    bad = True
            if bad:
                viol = i
                if stop_on_violation:
                    return viol, na, nb, i + 1
    return viol, na, nb, n


@njit(cache=True)
def replay_sampled(n, times, kinds, srcs, tgts, labs, state, thr, roles,
                   dim, side, L, sample_times, si0, grid):
    """Replay events, snapshotting the state into grid rows at the sample
    times (right-continuous).  Returns the next unfilled sample index."""
    si = si0
    ns = sample_times.shape[0]
    V = state.shape[0]
    for i in range(n):
        t = times[i]
        while si < ns and sample_times[si] < t:
            for j in range(V):
                grid[si, j] = state[j]
            si += 1
        _apply(state, kinds[i], srcs[i], tgts[i], labs[i],
               thr, roles, dim, side, L)
    return si


@njit(cache=True)
def contact_run(seed, horizon, dim, side, L, birth, death, state):
    """Standalone two-state contact process simulator (independent of the
    stacked-engine replay path; used as a distribution oracle).

    State values are 0/1.  Returns (occupied, extinction_time); extinction
    time is -1.0 when the process is still alive at the horizon.
    Draw order per event: gap, category, vertex, [target].
    """
    V = side ** dim
    total = V * (birth + death)
    cut = death / (birth + death)
    N = (2 * L + 1) ** dim - 1
    occ = 0
    for i in range(V):
        if state[i] != 0:
            occ += 1
    s = np.uint64(seed)
    t = 0.0
    while occ > 0:
        s, u = _next_unit(s)
        t += -np.log(1.0 - u) / total
        if t > horizon:
            return occ, -1.0
        s, uc = _next_unit(s)
        s, uv = _next_unit(s)
        x = int(uv * V)
        if x >= V:
            x = V - 1
        if uc < cut:
            if state[x] != 0:
                state[x] = 0
                occ -= 1
        else:
            s, un = _next_unit(s)
            k = int(un * N)
            if k >= N:
                k = N - 1
            y = _neighbor(x, k, dim, side, L)
            if state[x] != 0 and state[y] == 0:
                state[y] = 1
                occ += 1
    return 0, t
