"""Block identifiers and contiguous fine-tuning schemes.

The segmentation network is partitioned into 9 named blocks: encoder blocks
E1..E5 (E5 is the bottleneck) and decoder blocks D4..D1 (D1 ends at the
output layer). A fine-tuning scheme marks a contiguous run of blocks
trainable: encoder schemes count cumulatively from the input (e-k trains
E1..Ek), decoder schemes cumulatively from the bottleneck toward the output
(d-j trains D4..Dj), and "Full" trains everything.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

ENCODER = "encoder"
DECODER = "decoder"


@dataclass(frozen=True, order=True)
class BlockId:
    side: str
    index: int

    def __post_init__(self):
        if self.side not in (ENCODER, DECODER):
            raise ValidationError(f"bad block side {self.side!r}")
        if self.side == ENCODER and not 1 <= self.index <= 5:
            raise ValidationError("encoder blocks are E1..E5")
        if self.side == DECODER and not 1 <= self.index <= 4:
            raise ValidationError("decoder blocks are D4..D1")

    def __str__(self) -> str:
        return ("E" if self.side == ENCODER else "D") + str(self.index)


E1, E2, E3, E4, E5 = (BlockId(ENCODER, i) for i in range(1, 6))
D1, D2, D3, D4 = (BlockId(DECODER, i) for i in range(1, 5))

ALL_BLOCKS = (E1, E2, E3, E4, E5, D4, D3, D2, D1)


@dataclass(frozen=True)
class Scheme:
    """One fine-tuning scheme: ``kind`` is 'encoder', 'decoder' or 'full'."""

    kind: str
    depth: int | None = None

    def __post_init__(self):
        if self.kind == ENCODER:
            if self.depth is None or not 1 <= self.depth <= 5:
                raise ValidationError("encoder scheme depth must be 1..5")
        elif self.kind == DECODER:
            if self.depth is None or not 1 <= self.depth <= 4:
                raise ValidationError("decoder scheme index must be 1..4")
        elif self.kind == "full":
            if self.depth is not None:
                raise ValidationError("full scheme takes no depth")
        else:
            raise ValidationError(f"unknown scheme kind {self.kind!r}")

    @property
    def is_full(self) -> bool:
        return self.kind == "full"

    def trainable_blocks(self) -> tuple[BlockId, ...]:
        if self.kind == ENCODER:
            return tuple(BlockId(ENCODER, i) for i in range(1, self.depth + 1))
        if self.kind == DECODER:
            # cumulative from the bottleneck: d-j trains D4, D3, ..., Dj
            return tuple(BlockId(DECODER, i) for i in range(4, self.depth - 1, -1))
        return ALL_BLOCKS

    @property
    def n_blocks(self) -> int:
        return len(self.trainable_blocks())

    def __str__(self) -> str:
        if self.kind == ENCODER:
            return f"e-{self.depth}"
        if self.kind == DECODER:
            return f"d-{self.depth}"
        return "Full"

    @classmethod
    def parse(cls, token: str) -> "Scheme":
        t = token.strip().lower()
        if t == "full":
            return cls("full")
        if len(t) >= 3 and t[1] == "-" and t[0] in ("e", "d") and t[2:].isdigit():
            kind = ENCODER if t[0] == "e" else DECODER
            return cls(kind, int(t[2:]))
        raise ValidationError(f"cannot parse scheme {token!r}")


def encoder_scheme(k: int) -> Scheme:
    return Scheme(ENCODER, k)


def decoder_scheme(j: int) -> Scheme:
    return Scheme(DECODER, j)


FULL = Scheme("full")

# canonical ordering used in tables and reports
SCHEMES: tuple[Scheme, ...] = (
    encoder_scheme(1),
    encoder_scheme(2),
    encoder_scheme(3),
    encoder_scheme(4),
    encoder_scheme(5),
    decoder_scheme(4),
    decoder_scheme(3),
    decoder_scheme(2),
    decoder_scheme(1),
    FULL,
)

NON_FULL_SCHEMES = SCHEMES[:-1]

# matched-depth encoder/decoder pairs with equal block counts; e-5 has no
# decoder partner and is left out of paired comparisons
PAIRED_DEPTHS: tuple[tuple[Scheme, Scheme], ...] = tuple(
    (encoder_scheme(k), decoder_scheme(5 - k)) for k in range(1, 5)
)


def scheme_order_key(s: Scheme) -> tuple[int, int]:
    """Sort key: fewer trainable blocks first, encoder before decoder."""
    kind_rank = {"encoder": 0, "decoder": 1, "full": 2}[s.kind]
    return (s.n_blocks, kind_rank)
