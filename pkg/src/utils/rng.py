"""
基于计数器的随机数子流

所有随机抽样都通过 substream(seed, purpose, index) 获取生成器：
Philox 为计数器型生成器，由 SeedSequence(seed, spawn_key) 决定密钥，
因此同一 (seed, purpose, index) 在任何线程调度下都产生相同的序列。
"""

import hashlib

import numpy as np

from src.utils.errors import InputValidationError

# 固定的用途标签，保证不同实验使用互不相交的子流
PURPOSE_COVERAGE = "coverage"
PURPOSE_NOISE = "noise"
PURPOSE_SHAPE = "shape"
PURPOSE_CONE = "cone"
PURPOSE_VOLUME = "volume"
PURPOSE_DESIGN = "design"
PURPOSE_VERIFY = "verify"


def _purpose_key(purpose: str) -> int:
    digest = hashlib.sha1(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def require_seed(seed) -> int:
    """随机子命令必须显式给出种子，绝不自动随机化"""
    if seed is None:
        raise InputValidationError("随机计算需要显式的 seed")
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise InputValidationError(f"seed 必须是 64 位无符号整数: {seed}")
    return seed


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """返回 (seed, purpose, index) 对应的 Philox 生成器"""
    sequence = np.random.SeedSequence(
        entropy=require_seed(seed), spawn_key=(_purpose_key(purpose), int(index))
    )
    return np.random.Generator(np.random.Philox(sequence))


def chunk_sizes(total: int, chunk_size: int) -> list[int]:
    """把 total 次抽样切成固定大小的块（最后一块可能较小）"""
    if total <= 0:
        return []
    chunk_size = max(1, int(chunk_size))
    full, rest = divmod(int(total), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])
