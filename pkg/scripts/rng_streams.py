import hashlib

import numpy as np

DEFAULT_BLOCK_SIZE = 2000


def scenario_key(scenario_id):
    """Stable 64-bit integer for a scenario id of any printable type"""
    digest = hashlib.sha256(str(scenario_id).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def block_stream(seed, scenario_id, block_index):
    """Independent Philox stream for one block of replications"""
    if seed < 0:
        raise ValueError(f"Seed must be nonnegative, got {seed}")
    sequence = np.random.SeedSequence([int(seed), scenario_key(scenario_id), int(block_index)])
    return np.random.Generator(np.random.Philox(sequence))


def replication_blocks(replications, block_size=DEFAULT_BLOCK_SIZE):
    """Split replications into (block index, size) pieces of fixed size"""
    blocks = []
    start = 0
    index = 0
    while start < replications:
        size = min(block_size, replications - start)
        blocks.append((index, size))
        start += size
        index += 1
    return blocks
