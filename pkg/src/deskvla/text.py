"""Word-piece vocabulary and tokenizer for the surrogate policy.

Deliberately small: lowercase, split on whitespace, strip surrounding
punctuation, fall back to [UNK] for anything outside the fixed table.
The last 256 vocabulary IDs are reserved for action tokens and never
produced by the tokenizer.
"""

from __future__ import annotations

from .actions import NUM_BINS, TokenMap

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
ACT_TOKEN = "[ACT]"  # decode-start marker fed into the first action slot

PAD_ID = 0
UNK_ID = 1
ACT_ID = 2

_STRIP_CHARS = ".,:;!?\"'()[]{}"

# Core word list covering the synthetic tasks, the paraphrase templates,
# and generic manipulation vocabulary. The table is padded with unused
# slots up to the configured base size.
DEFAULT_WORDS = [
    "a", "an", "and", "arm", "at", "ball", "block", "blue", "bottom", "bring",
    "carefully", "carry", "center", "complete", "corner", "cup", "down",
    "edge", "finally", "first", "front", "gently", "goal", "grab", "grasp",
    "green", "gripper", "hand", "have", "hold", "if", "in", "intends", "is",
    "it", "item", "its", "left", "lift", "location", "lower", "manipulate",
    "motion", "move", "moving", "must", "new", "now", "object", "objects",
    "of", "onto", "order", "pick", "place", "plate", "position", "precisely",
    "put", "red", "region", "release", "relocate", "resting", "right",
    "robot", "set", "should", "slowly", "so", "spot", "take", "target",
    "task", "that", "the", "then", "tidy", "to", "top", "toward", "towards",
    "transport", "up", "upper", "utensil", "utensils", "with", "yellow",
    "zone",
]


def word_pieces(text: str) -> list[str]:
    """Lowercase whitespace tokenization with surrounding punctuation stripped."""
    pieces = []
    for raw in text.lower().split():
        piece = raw.strip(_STRIP_CHARS)
        if piece:
            pieces.append(piece)
    return pieces


class Vocab:
    """Fixed word-piece table with a reserved action-token tail."""

    def __init__(self, words: list[str] | None = None, base_size: int = 1024):
        words = list(DEFAULT_WORDS) if words is None else list(words)
        specials = [PAD_TOKEN, UNK_TOKEN, ACT_TOKEN]
        if len(words) + len(specials) > base_size:
            raise ValueError("word list exceeds base table size")
        table = specials + words
        table += [f"[unused{i}]" for i in range(base_size - len(table))]
        self.base_size = base_size
        self.words = words
        self.id_to_word = table
        self.word_to_id = {w: i for i, w in enumerate(table)}
        self.token_map = TokenMap(base_vocab_size=base_size + NUM_BINS)

    @property
    def size(self) -> int:
        """Full vocabulary size including the reserved action tokens."""
        return self.base_size + NUM_BINS

    def encode(self, text: str) -> list[int]:
        return [self.word_to_id.get(p, UNK_ID) for p in word_pieces(text)]

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            i = int(i)
            if i >= self.base_size:
                words.append(f"<act:{i - self.token_map.action_token_offset}>")
            else:
                words.append(self.id_to_word[i])
        return " ".join(words)

    def to_config(self) -> dict:
        return {"base_size": self.base_size, "words": self.words}

    @classmethod
    def from_config(cls, cfg: dict) -> "Vocab":
        return cls(words=cfg["words"], base_size=cfg["base_size"])
