"""Token-accounted conversation state for the agent loop.

A conversation is a system prompt plus an append-ordered list of turns. Token
totals are maintained incrementally and always equal the recomputed sum.
Compaction replaces the turns with a single summary-role message; turns that
arrived after the snapshot was taken survive after the summary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .tokenization import TokenCounter

ROLES = ("system", "user", "assistant", "summary")


@dataclass(frozen=True)
class Message:
    role: str
    content: str
    token_count: int

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("user", "assistant") and not self.content:
            raise ValueError(f"{self.role} message must have non-empty content")
        if self.token_count < 0:
            raise ValueError("token_count must be >= 0")


def make_message(role: str, content: str, counter: TokenCounter) -> Message:
    return Message(role=role, content=content, token_count=counter.count(content))


@dataclass
class ConversationState:
    """Single-writer conversation; snapshots handed out are plain strings."""

    system_prompt: Message
    counter: TokenCounter
    turns: list[Message] = field(default_factory=list)
    total_tokens: int = 0

    @classmethod
    def new(cls, system_text: str, counter: TokenCounter) -> "ConversationState":
        msg = make_message("system", system_text, counter)
        return cls(system_prompt=msg, counter=counter, total_tokens=msg.token_count)

    def append(self, msg: Message) -> None:
        if msg.role == "system":
            raise ValueError("system prompt is fixed at construction")
        if msg.token_count != self.counter.count(msg.content):
            raise ValueError("message token_count inconsistent with the run counter")
        self.turns.append(msg)
        self.total_tokens += msg.token_count

    def append_text(self, role: str, content: str) -> Message:
        msg = make_message(role, content, self.counter)
        self.append(msg)
        return msg

    def render_transcript(self) -> str:
        """Canonical flat rendering: "<role>: <content>\\n" per message, system first."""
        parts = [f"{self.system_prompt.role}: {self.system_prompt.content}\n"]
        parts.extend(f"{m.role}: {m.content}\n" for m in self.turns)
        return "".join(parts)

    def exceeds_threshold(self, tau: int) -> bool:
        if tau <= 0:
            raise ValueError("tau must be > 0")
        return self.total_tokens > tau

    def snapshot(self) -> tuple[str, int]:
        """Return (transcript, turn count at snapshot time)."""
        return self.render_transcript(), len(self.turns)

    def replace_with_summary(self, summary: str, snapshot_turns: int | None = None) -> None:
        """Replace the snapshotted turns with one summary message.

        Turns appended after the snapshot (index >= ``snapshot_turns``) are
        kept, in order, after the summary.
        """
        if not summary:
            raise ValueError("summary must be non-empty")
        if snapshot_turns is None:
            snapshot_turns = len(self.turns)
        late = self.turns[snapshot_turns:]
        summary_msg = make_message("summary", summary, self.counter)
        self.turns = [summary_msg, *late]
        self.total_tokens = self.system_prompt.token_count + sum(
            m.token_count for m in self.turns
        )

    def recompute_total(self) -> int:
        return self.system_prompt.token_count + sum(m.token_count for m in self.turns)
