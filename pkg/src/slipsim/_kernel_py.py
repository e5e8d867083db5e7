"""Pure-Python twin of the compiled event loop in ``_kernel.pyx``.

Used when the extension is not built, and as the reference the compiled
version is benchmarked and cross-checked against.
"""


def _beats(e, arr, aid, be, barr, bid):
    if e != be:
        return e > be
    if arr != barr:
        return arr < barr
    return aid < bid


def _leader(side, ids, arrival, eps, which):
    best = -1
    for k in range(len(side)):
        if side[k] == which:
            if best < 0 or _beats(eps[k], arrival[k], ids[k], eps[best], arrival[best], ids[best]):
                best = k
    return best


def advance(
    side, ids, arrival, eps, ref, cash,
    sel, z, u,
    counters, price,
    mu, sigma, target, idle_cap,
    trade_i, trade_f, exec_i, exec_f, arr_i, arr_f,
):
    n = len(side)
    nsel, nz, nu = len(sel), len(z), len(u)
    # python scalars are much faster to index than numpy arrays
    side_l, ids_l, arrival_l = side.tolist(), ids.tolist(), arrival.tolist()
    eps_l, ref_l, cash_l = eps.tolist(), ref.tolist(), cash.tolist()
    sel, z, u = sel.tolist(), z.tolist(), u.tolist()
    t, next_id, sp, zp, up, idle, events, ne, na = (int(c) for c in counters)
    P = float(price[0])
    nb = sum(1 for s in side_l if s < 0)
    bb = _leader(side_l, ids_l, arrival_l, eps_l, -1)
    bs = _leader(side_l, ids_l, arrival_l, eps_l, 1)
    status = 0
    trades, execs, arrivals = [], [], []
    mu = float(mu)
    sigma = float(sigma)

    while t < target:
        if sp >= nsel:
            status = 1
            break
        if zp + 3 > nz:
            status = 2
            break
        if up + 2 > nu:
            status = 3
            break
        if idle >= idle_cap:
            status = 4
            break
        events += 1
        idle += 1

        j = sel[sp]
        sp += 1
        old = eps_l[j]
        eps_l[j] = mu + sigma * z[zp]
        zp += 1

        if side_l[j] < 0:
            if j == bb:
                if eps_l[j] < old:
                    bb = _leader(side_l, ids_l, arrival_l, eps_l, -1)
            elif _beats(eps_l[j], arrival_l[j], ids_l[j], eps_l[bb], arrival_l[bb], ids_l[bb]):
                bb = j
        else:
            if j == bs:
                if eps_l[j] < old:
                    bs = _leader(side_l, ids_l, arrival_l, eps_l, 1)
            elif _beats(eps_l[j], arrival_l[j], ids_l[j], eps_l[bs], arrival_l[bs], ids_l[bs]):
                bs = j
        eb = eps_l[bb]
        es = eps_l[bs]
        if not (eb + es >= 0.0):
            continue

        idle = 0
        newp = P + (eb - es) / 2.0
        dp = newp - P
        ns = n - nb

        sdw = 0.0
        for k in range(n):
            wb = side_l[k] * P + cash_l[k]
            if k == bb:
                ca = cash_l[k] - 1 * newp
                wa = 0 * newp + ca
            elif k == bs:
                ca = cash_l[k] + 1 * newp
                wa = 0 * newp + ca
            else:
                wa = side_l[k] * newp + cash_l[k]
            sdw += wa - wb

        t += 1
        trades.append((ids_l[bb], ids_l[bs], nb, ns, newp, dp, sdw + (nb - ns) * dp, eb, es))
        for slot in (bb, bs):
            execs.append((ids_l[slot], side_l[slot], arrival_l[slot], t, ref_l[slot], newp))

        P = newp
        nb -= 1
        ns -= 1
        for slot in sorted((bb, bs)):
            tot = nb + ns
            p_buy = ns / tot if tot > 0 else 0.5
            if u[up] < p_buy:
                s = -1
                nb += 1
            else:
                s = 1
                ns += 1
            up += 1
            side_l[slot] = s
            ids_l[slot] = next_id
            next_id += 1
            arrival_l[slot] = t
            ref_l[slot] = newp
            cash_l[slot] = (-s) * newp
            eps_l[slot] = mu + sigma * z[zp]
            zp += 1
            arrivals.append((ids_l[slot], s, t, newp))
        bb = _leader(side_l, ids_l, arrival_l, eps_l, -1)
        bs = _leader(side_l, ids_l, arrival_l, eps_l, 1)

    r0 = int(counters[0])
    for r, row in enumerate(trades, start=r0):
        trade_i[r] = row[:4]
        trade_f[r] = row[4:]
    for r, row in enumerate(execs, start=int(counters[7])):
        exec_i[r] = row[:4]
        exec_f[r] = row[4:]
    for r, row in enumerate(arrivals, start=int(counters[8])):
        arr_i[r] = row[:3]
        arr_f[r] = row[3]

    side[:] = side_l
    ids[:] = ids_l
    arrival[:] = arrival_l
    eps[:] = eps_l
    ref[:] = ref_l
    cash[:] = cash_l
    counters[:9] = (t, next_id, sp, zp, up, idle, events, ne + len(execs), na + len(arrivals))
    price[0] = P
    return status
