"""Shared oracles for network verification: a straight-line scalar
transcription of the gated layer equations, and the permutation-equivariance
check. Used by both the unit tests and the acceptance suite."""

import math

import numpy as np
from conftest import toy_graph

from graphvos import gnn


def scalar_transcription_max_diff(seed=13):
    """Run the vectorized forward and a pure-scalar re-implementation on a
    2-node hand-parameterized graph; returns the max absolute difference."""
    cfg = gnn.GnnConfig(layers=2, hidden=2, node_dim=3, edge_dim=2,
                        dropout_p=0.0)
    params = gnn.init_params(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for i in range(cfg.layers):
        p = f"layer{i:02d}_"
        for stream in ("node", "edge"):
            params[p + f"bn_{stream}_mean"] = rng.normal(0, 0.3, cfg.hidden)
            params[p + f"bn_{stream}_var"] = 1.0 + rng.random(cfg.hidden)
            params[p + f"bn_{stream}_scale"] = 0.5 + rng.random(cfg.hidden)
            params[p + f"bn_{stream}_shift"] = rng.normal(0, 0.2, cfg.hidden)

    g = toy_graph(2, [(0, 1), (1, 0)])
    x = rng.normal(size=(2, 3))
    z = rng.normal(size=(2, 2))
    out = gnn.forward(params, cfg, g, x, z)

    H, N, E = cfg.hidden, cfg.node_dim, cfg.edge_dim
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    edge_list = list(zip(g.src.tolist(), g.dst.tolist()))

    def matvec(m, vec):
        return [sum(m[i][j] * vec[i] for i in range(len(vec)))
                for j in range(len(m[0]))]

    t = {k: v.tolist() for k, v in params.tensors.items()}
    h = [[sum(t["embed_node_w"][i][j] * x[n][i] for i in range(N))
          + t["embed_node_b"][j] for j in range(H)] for n in range(2)]
    e = [[sum(t["embed_edge_w"][i][j] * z[k][i] for i in range(E))
          + t["embed_edge_b"][j] for j in range(H)]
         for k in range(len(edge_list))]

    for layer in range(cfg.layers):
        p = f"layer{layer:02d}_"
        gate_logit = []
        for k, (s, d) in enumerate(edge_list):
            ce = matvec(t[p + "gate_edge"], e[k])
            dh = matvec(t[p + "gate_src"], h[s])
            fh = matvec(t[p + "gate_dst"], h[d])
            gate_logit.append([ce[j] + dh[j] + fh[j] for j in range(H)])
        new_h = []
        for v in range(2):
            ah = matvec(t[p + "self"], h[v])
            num = [0.0] * H
            den = [cfg.epsilon_gate] * H
            for k, (s, d) in enumerate(edge_list):
                if d != v:
                    continue
                bh = matvec(t[p + "neigh"], h[s])
                for j in range(H):
                    gate = sig(gate_logit[k][j])
                    num[j] += gate * bh[j]
                    den[j] += gate
            h_tilde = [ah[j] + num[j] / den[j] for j in range(H)]
            bn = [(max(h_tilde[j], 0.0) - t[p + "bn_node_mean"][j])
                  / math.sqrt(t[p + "bn_node_var"][j] + cfg.epsilon_bn)
                  * t[p + "bn_node_scale"][j] + t[p + "bn_node_shift"][j]
                  for j in range(H)]
            new_h.append([bn[j] + h[v][j] for j in range(H)])
        new_e = []
        for k in range(len(edge_list)):
            bn = [(max(gate_logit[k][j], 0.0) - t[p + "bn_edge_mean"][j])
                  / math.sqrt(t[p + "bn_edge_var"][j] + cfg.epsilon_bn)
                  * t[p + "bn_edge_scale"][j] + t[p + "bn_edge_shift"][j]
                  for j in range(H)]
            new_e.append([bn[j] + e[k][j] for j in range(H)])
        h, e = new_h, new_e

    expected = [sig(sum(h[v][j] * t["readout_w"][j][0] for j in range(H))
                    + t["readout_b"][0]) for v in range(2)]
    return max(abs(out[0] - expected[0]), abs(out[1] - expected[1]))


def permutation_equivariance_max_diff(seed=5):
    """Relabel nodes, permute features/edges consistently; returns the max
    absolute output difference after undoing the permutation (eval mode)."""
    cfg = gnn.GnnConfig(layers=2, hidden=4, node_dim=3, edge_dim=2,
                        dropout_p=0.0)
    edges = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2), (0, 3), (3, 0)]
    g = toy_graph(4, edges)
    params = gnn.init_params(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(4, 3))
    z = rng.normal(size=(len(edges), 2))
    out = gnn.forward(params, cfg, g, x, z)

    perm = np.array([2, 0, 3, 1])
    edges_p = [(perm[s], perm[d]) for (s, d) in edges]
    order_old = np.lexsort((np.zeros(len(edges)),
                            np.array([s for s, _ in edges]),
                            np.array([d for _, d in edges])))
    z_by_edge = {edges[e]: z[row] for row, e in enumerate(order_old)}
    order_new = np.lexsort((np.zeros(len(edges_p)),
                            np.array([s for s, _ in edges_p]),
                            np.array([d for _, d in edges_p])))
    zp = np.stack([z_by_edge[edges[e]] for e in order_new])
    xp = np.empty_like(x)
    xp[perm] = x
    gp = toy_graph(4, edges_p)
    out_p = gnn.forward(params, cfg, gp, xp, zp)
    return float(np.abs(out_p[perm] - out).max())
