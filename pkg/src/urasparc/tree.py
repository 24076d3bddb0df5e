"""Outer tree code: parity-augmented sectionized encoding, list decoding,
the random cover-decoder experiment, and the support-channel rate bound.

Bit conventions (fixed so independent implementations agree bit-exactly):

* a message is a length-B array of 0/1, consumed MSB-first into blocks of
  b_1..b_L info bits;
* section l's index is the J-bit integer [info block | parity block],
  info bits in the high positions, read MSB-first, 0-based in [0, 2^J);
* the parity block for section l is G_l @ (all info bits of sections
  < l) mod 2, where G_l is iid Bernoulli(1/2) drawn from the stream
  keyed (paritySeed, l);
* message hex strings read the B bits MSB-first, left-padded to
  ceil(B/4) digits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TreeDecodeOverload(RuntimeError):
    """Partial-path count exceeded the decoding budget."""


@dataclass(frozen=True)
class ParityProfile:
    J: int
    info_bits: tuple    # b_l per section
    parity_bits: tuple  # pi_l per section

    def __post_init__(self):
        b, pi = self.info_bits, self.parity_bits
        if len(b) != len(pi):
            raise ValueError("info and parity profiles differ in length")
        if any(bb + pp != self.J for bb, pp in zip(b, pi)):
            raise ValueError("b_l + pi_l must equal J in every section")
        if pi[0] != 0:
            raise ValueError("first section carries no parity")
        if any(bb < 0 or pp < 0 for bb, pp in zip(b, pi)):
            raise ValueError("negative bit counts")

    @property
    def L(self):
        return len(self.info_bits)

    @property
    def B(self):
        return sum(self.info_bits)

    @property
    def R_out(self):
        return self.B / (self.L * self.J)


# The two profiles used for the large-scale performance figures.
PROFILE_J20_L8 = ParityProfile(
    J=20,
    info_bits=(20, 11, 12, 11, 12, 11, 12, 0),
    parity_bits=(0, 9, 8, 9, 8, 9, 8, 20))

PROFILE_J15_L16 = ParityProfile(
    J=15,
    info_bits=(15, 8, 7, 7, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 2, 1),
    parity_bits=(0, 7, 8, 8, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 13, 14))


def profile_for(B, L, J):
    """Parity profile with a parity-heavy last section and the remaining
    parity spread as evenly as possible over the middle sections, any
    leftover landing on the later ones (false paths multiply through the
    lightly-checked early sections either way; late parity is what kills
    them before the final checksum)."""
    total_parity = L * J - B
    if total_parity < 0:
        raise ValueError("B exceeds L*J")
    if total_parity == 0:
        return ParityProfile(J=J, info_bits=(J,) * L, parity_bits=(0,) * L)
    if L < 2:
        raise ValueError("parity needs at least two sections")
    last = min(J, total_parity)
    rest = total_parity - last
    mid = [0] * max(0, L - 2)
    if rest:
        if not mid:
            raise ValueError("profile does not fit")
        base, extra = divmod(rest, len(mid))
        mid = [base + (1 if i >= len(mid) - extra else 0)
               for i in range(len(mid))]
        if max(mid) > J:
            raise ValueError("profile does not fit")
    pi = tuple([0] + mid + [last])
    return ParityProfile(J=J, info_bits=tuple(J - p for p in pi),
                         parity_bits=pi)


class TreeCodebook:
    """Per-section parity generator matrices from a seeded stream."""

    def __init__(self, profile: ParityProfile, parity_seed=0):
        self.profile = profile
        self.parity_seed = int(parity_seed)
        self.generators = []
        prefix = 0
        for l in range(profile.L):
            pi = profile.parity_bits[l]
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(entropy=self.parity_seed,
                                       spawn_key=(l,))))
            self.generators.append(
                rng.integers(0, 2, size=(pi, prefix), dtype=np.uint8))
            prefix += profile.info_bits[l]


def bits_to_hex(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    val = 0
    for b in bits:
        val = (val << 1) | int(b)
    return format(val, f"0{-(-len(bits) // 4)}x")

def hex_to_bits(s, B):
    val = int(s, 16)
    return np.array([(val >> (B - 1 - i)) & 1 for i in range(B)],
                    dtype=np.uint8)


def _bits_to_index(bits):
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def _index_to_bits(idx, J):
    return np.array([(idx >> (J - 1 - i)) & 1 for i in range(J)],
                    dtype=np.uint8)


def tree_encode(cb: TreeCodebook, message):
    """Message bits -> per-section indices (length-L tuple)."""
    prof = cb.profile
    bits = np.asarray(message, dtype=np.uint8)
    if bits.shape != (prof.B,):
        raise ValueError(f"message must be {prof.B} bits")
    indices = []
    pos = 0
    prefix = np.zeros(0, dtype=np.uint8)
    for l in range(prof.L):
        b = prof.info_bits[l]
        info = bits[pos:pos + b]
        pos += b
        parity = (cb.generators[l] @ prefix) % 2 if prof.parity_bits[l] \
            else np.zeros(0, dtype=np.uint8)
        indices.append(_bits_to_index(np.concatenate([info, parity])))
        prefix = np.concatenate([prefix, info])
    return tuple(indices)


def tree_decode(cb: TreeCodebook, lists, Ka, path_budget=10 ** 6, rng=None,
                return_stats=False):
    """List-decode per-section candidate lists back to messages.

    Breadth-first over sections: a partial path survives section l when
    the candidate's parity block matches G_l applied to the path's
    accumulated info bits. Raises TreeDecodeOverload when the working
    path count would exceed path_budget. If more than Ka full paths
    survive, Ka of them are kept uniformly at random (seeded from the
    codebook's parity seed unless an rng is passed). Output is sorted.
    """
    prof = cb.profile
    if len(lists) != prof.L:
        raise ValueError("need one candidate list per section")
    J = prof.J
    stats = []
    paths = None
    for l in range(prof.L):
        cand = sorted(set(int(i) for i in lists[l]))
        if any(not 0 <= i < (1 << J) for i in cand):
            raise ValueError("candidate index out of range")
        cbits = np.array([_index_to_bits(i, J) for i in cand],
                         dtype=np.uint8).reshape(len(cand), J)
        b, pi = prof.info_bits[l], prof.parity_bits[l]
        info, par = cbits[:, :b], cbits[:, b:]
        if l == 0:
            paths = info.copy()
        else:
            # uint8 matmul wraps mod 256, which preserves parity
            need = (paths @ cb.generators[l].T) % 2  # (P, pi)
            grown = []
            total = 0
            for c in range(len(cand)):
                hit = np.all(need == par[c][None, :], axis=1) if pi \
                    else np.ones(len(paths), dtype=bool)
                rows = np.nonzero(hit)[0]
                total += len(rows)
                if total > path_budget:
                    raise TreeDecodeOverload(
                        f"over {path_budget} paths at section {l}")
                if len(rows):
                    grown.append(np.hstack([
                        paths[rows],
                        np.repeat(info[c][None, :], len(rows), axis=0)]))
            paths = np.vstack(grown) if grown else \
                np.zeros((0, paths.shape[1] + b), dtype=np.uint8)
        if len(paths) > path_budget:
            raise TreeDecodeOverload(f"over {path_budget} paths at section {l}")
        stats.append(len(paths))
    msgs = [tuple(int(x) for x in row) for row in paths]
    if len(msgs) > Ka:
        if rng is None:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
                entropy=cb.parity_seed, spawn_key=(0x7ee,))))
        keep = rng.choice(len(msgs), size=Ka, replace=False)
        msgs = [msgs[i] for i in sorted(keep)]
    msgs = sorted(msgs)
    out = [np.array(mb, dtype=np.uint8) for mb in msgs]
    if return_stats:
        return out, stats
    return out


@dataclass(frozen=True)
class CoverReport:
    p_false_cover: float
    stderr: float
    bound: float
    trials: int
    mean_false_covers: float


def cover_decode_experiment(L, J, Ka, R_out, trials, seed=0):
    """Random-coding experiment for the cover decoder.

    Per trial: draw a fresh iid codebook of 2^(L*J*R_out) section-index
    tuples, transmit Ka of them, OR the supports per section, and count
    non-transmitted codewords whose every section index is covered.
    Reports the empirical P(any false cover) against the union bound
    2^(L*J*(R_out - (1 - 1/alpha))).
    """
    M = round(2.0 ** (L * J * R_out))
    if M * L > 5e8:
        raise ValueError("codebook too large for the experiment")
    alpha = J / math.log2(Ka) if Ka > 1 else math.inf
    bound = 2.0 ** (L * J * (R_out - (1.0 - 1.0 / alpha)))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    hits = 0
    false_total = 0
    for _ in range(trials):
        book = rng.integers(0, 1 << J, size=(M, L))
        sent = book[:Ka]
        covered = np.ones(M - Ka, dtype=bool)
        for l in range(L):
            mask = np.zeros(1 << J, dtype=bool)
            mask[sent[:, l]] = True
            covered &= mask[book[Ka:, l]]
        nfa = int(covered.sum())
        false_total += nfa
        hits += nfa >= 1
    p = hits / trials
    se = math.sqrt(max(p * (1.0 - p), 1.0 / trials) / trials)
    return CoverReport(p_false_cover=p, stderr=se, bound=bound, trials=trials,
                       mean_false_covers=false_total / trials)


def binary_entropy(p):
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    inside = (p > 0) & (p < 1)
    q = p[inside]
    out[inside] = -q * np.log2(q) - (1 - q) * np.log2(1 - q)
    return out if out.ndim else float(out)


def outer_rate_bound(J, Ka, p_md, p_fa):
    """Achievable outer-rate cap (bits per coded bit) of the support
    channel with miss/false-alarm rates, and its large-J limit."""
    p0 = math.exp(Ka * math.log1p(-(2.0 ** -J)))
    h_out = binary_entropy((1.0 - p0) * (1.0 - p_fa - p_md) + p_fa)
    finite = (h_out - p0 * binary_entropy(p_fa)
              - (1.0 - p0) * binary_entropy(p_md)) * 2.0 ** J / (J * Ka)
    alpha = J / math.log2(Ka) if Ka > 1 else math.inf
    asym = (1.0 - p_md) * (1.0 - 1.0 / alpha)
    return float(finite), float(asym)
