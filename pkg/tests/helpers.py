"""Shared builders for the test suite."""

from wfifo import FlowSpec, NetworkConfig, QueueSpec


def make_cfg(p_off_rows, lambdas=None, beta=1.0, M=1000.0, r_max=2.0):
    """NetworkConfig from nested p_off lists, optionally with arrival rates."""
    queues = []
    for n, row in enumerate(p_off_rows):
        flows = []
        for k, p in enumerate(row):
            lam = None if lambdas is None else lambdas[n][k]
            flows.append(FlowSpec(p_off=p, lam=lam))
        queues.append(QueueSpec(flows=flows))
    return NetworkConfig(queues=queues, beta=beta, M=M, r_max=r_max)


def single_queue_cfg(p_off, lambdas=None, **kw):
    return make_cfg([list(p_off)], None if lambdas is None else [list(lambdas)], **kw)
