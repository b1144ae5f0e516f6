"""Few-shot prompt construction for the three request families."""

from __future__ import annotations

from .core import Question

TAG_KNOWLEDGE_GEN = "knowledge_gen"
TAG_DIRECT_ANSWER = "direct_answer"
TAG_KNOWLEDGE_ANSWER = "knowledge_answer"

PROMPT_TAGS = (TAG_KNOWLEDGE_GEN, TAG_DIRECT_ANSWER, TAG_KNOWLEDGE_ANSWER)

_ANSWER_SYSTEM = (
    "You answer multiple-choice commonsense questions. Weigh the everyday "
    "facts involved, then reply with one line of the form \"Answer: (i)\" "
    "giving the number of the best option."
)

_KNOWLEDGE_SYSTEM = (
    "You provide background commonsense for questions. Given a question, "
    "write exactly one self-contained commonsense statement that would help "
    "someone answer it. State a general fact about the world; do not repeat "
    "the question and do not state the answer."
)

# Hand-written in-context exemplars; three per answering family.
_EXEMPLARS = (
    {
        "stem": "Nadia put ice cubes into her soup because it was too _.",
        "options": ("hot", "salty"),
        "answer": 0,
        "knowledge": "Adding ice cools food that is too hot.",
    },
    {
        "stem": (
            "The movers turned the sofa sideways to carry it through the "
            "doorway because the doorway was too _."
        ),
        "options": ("narrow", "tall", "dusty"),
        "answer": 0,
        "knowledge": "A wide object can fit through a narrow opening when turned sideways.",
    },
    {
        "stem": (
            "Priya watered the garden early in the morning so the water "
            "would not _ before soaking in."
        ),
        "options": ("freeze", "evaporate"),
        "answer": 1,
        "knowledge": "Water evaporates faster in midday heat than in the cool of the morning.",
    },
)


def render_options(options: tuple[str, ...] | list[str]) -> str:
    """Render options 1-based on one line: (1) a (2) b ..."""
    return " ".join(f"({i}) {text}" for i, text in enumerate(options, start=1))


def question_block(stem: str, options: tuple[str, ...] | list[str]) -> str:
    return f"Question: {stem}\nOptions: {render_options(options)}"


def question_with_options(q: Question) -> str:
    """Stem plus rendered options; the text the scorer judges knowledge against."""
    return question_block(q.stem, q.options)


def render_prompt(
    q: Question, tag: str, knowledge: str | None = None
) -> tuple[tuple[str, str], ...]:
    """Build the message list for a question under the given prompt family.

    Answer prompts carry three worked exemplars; knowledge prompts ask for a
    single free-standing statement about the question's situation. The target
    question never appears with its answer marked.
    """
    if tag == TAG_KNOWLEDGE_GEN:
        messages: list[tuple[str, str]] = [("system", _KNOWLEDGE_SYSTEM)]
        for ex in _EXEMPLARS:
            messages.append(("user", f"Question: {ex['stem']}"))
            messages.append(("assistant", ex["knowledge"]))
        messages.append(("user", f"Question: {q.stem}"))
        return tuple(messages)

    if tag == TAG_DIRECT_ANSWER:
        messages = [("system", _ANSWER_SYSTEM)]
        for ex in _EXEMPLARS:
            messages.append(("user", question_block(ex["stem"], ex["options"])))
            messages.append(("assistant", f"Answer: ({ex['answer'] + 1})"))
        messages.append(("user", question_with_options(q)))
        return tuple(messages)

    if tag == TAG_KNOWLEDGE_ANSWER:
        if knowledge is None:
            raise ValueError("knowledge_answer prompts require knowledge text")
        messages = [("system", _ANSWER_SYSTEM)]
        for ex in _EXEMPLARS:
            block = f"Knowledge: {ex['knowledge']}\n" + question_block(ex["stem"], ex["options"])
            messages.append(("user", block))
            messages.append(("assistant", f"Answer: ({ex['answer'] + 1})"))
        messages.append(("user", f"Knowledge: {knowledge}\n" + question_with_options(q)))
        return tuple(messages)

    raise ValueError(f"unknown prompt tag {tag!r}")
