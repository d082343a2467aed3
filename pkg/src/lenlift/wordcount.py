"""Word counting with Treebank-style tokenization.

A response's length is the number of tokens produced by a Penn Treebank
style word tokenizer, after dropping every token that is a contiguous
substring of ``string.punctuation``.  That substring test has a few
visible quirks which are kept on purpose:

    ","    -> excluded          "()"  -> excluded (it is a substring)
    "..."  -> counted as a word "``"  -> counted (normalized double quote)

Text is first split into sentences the way an untrained Punkt splitter
does it (``.``, ``?`` or ``!`` followed by whitespace or a non-word
character, except after ellipses and, in some contexts, initials and
numbers).  Each sentence is then tokenized with the ordered rule set
below.  Line breaks alone never end a sentence.
"""

from __future__ import annotations

import re
import string

__all__ = [
    "PUNCTUATION",
    "count_words",
    "is_excluded",
    "normalize",
    "split_sentences",
    "tokenize",
    "tokenize_sentence",
]

PUNCTUATION = string.punctuation

# Typographic characters mapped onto ASCII before tokenizing.
_TRANSLATION = str.maketrans(
    {
        "“": '"',
        "”": '"',
        "„": '"',
        "«": '"',
        "»": '"',
        "‘": "'",
        "’": "'",
        "‚": "'",
        "′": "'",
        "—": "--",
        "―": "--",
        "–": "-",
        "‒": "-",
        "…": "...",
    }
)

_Rule = tuple[re.Pattern[str], str]


def _rules(*pairs: tuple[str, str]) -> list[_Rule]:
    return [(re.compile(p), r) for p, r in pairs]


# 1. opening quotes become ``
_STARTING_QUOTES = _rules(
    (r"([`]+)", r" \1 "),
    (r'^"', r"``"),
    (r"(``)", r" \1 "),
    (r"([ \(\[{<])(\"|'{2})", r"\1 `` "),
    (r"(?i)(?<!\w)(')(?!(?:re|ve|ll|m|t|s|d|n)\b)(?=\w)", r"\1 "),
)

# 2. punctuation: commas/colons before non-digits, the sentence-final
# period, runs of dots kept whole, and symbols that always stand alone
_PUNCTUATION = _rules(
    (r"([^\.])(\.)([\]\)}>\"' ]*)\s*$", r"\1 \2 \3 "),
    (r"([:,])([^\d])", r" \1 \2"),
    (r"([:,])$", r" \1 "),
    (r"\.{2,}", r" \g<0> "),
    (r"[;@#$%&]", r" \g<0> "),
    (r"([^\.])(\.)([\]\)}>\"']*)\s*$", r"\1 \2\3 "),
    (r"[?!]", r" \g<0> "),
    (r"([^'])' ", r"\1 ' "),
    (r"[*]", r" \g<0> "),
)

_BRACKETS: _Rule = (re.compile(r"[\]\[\(\)\{\}\<\>]"), r" \g<0> ")
_DOUBLE_DASH: _Rule = (re.compile(r"--"), r" -- ")

# 3. closing quotes become '', then clitics split off
_ENDING_QUOTES = _rules(
    (r"''", " '' "),
    (r'"', " '' "),
    (r"\s+", " "),
    (r"([^' ])('[sS]|'[mM]|'[dD]|') ", r"\1 \2 "),
    (r"([^' ])('ll|'LL|'re|'RE|'ve|'VE|n't|N'T) ", r"\1 \2 "),
)

# fused forms: cannot -> can not, gonna -> gon na, 'tis -> 't is
_FUSED = [
    re.compile(p)
    for p in (
        r"(?i)\b(can)(?#X)(not)\b",
        r"(?i)\b(d)(?#X)('ye)\b",
        r"(?i)\b(gim)(?#X)(me)\b",
        r"(?i)\b(gon)(?#X)(na)\b",
        r"(?i)\b(got)(?#X)(ta)\b",
        r"(?i)\b(lem)(?#X)(me)\b",
        r"(?i)\b(more)(?#X)('n)\b",
        r"(?i)\b(wan)(?#X)(na)(?=\s)",
        r"(?i) ('t)(?#X)(is)\b",
        r"(?i) ('t)(?#X)(was)\b",
    )
]

# Sentence boundaries follow Punkt with no trained abbreviation list:
# a candidate is [.?!] followed by a non-word character or by whitespace
# and another token; it is confirmed by annotating the surrounding tokens.
_NON_WORD = r"(?:[)\";}\]\*:@'\({\[?!])"
_MULTI_CHAR = r"(?:\-{2,}|\.{2,}|(?:\.\s){2,}\.)"
_WORD_START = r"[^\(\"\`{\[:;&\#\*@\)}\]\-,]"
_PERIOD_CONTEXT = re.compile(
    rf"[.?!](?=(?P<after>{_NON_WORD}|\s+(?P<next>\S+)))"
)
_PUNKT_WORD = re.compile(
    rf"""(
        {_MULTI_CHAR}
        |
        (?={_WORD_START})\S+?
        (?=\s|$|{_NON_WORD}|{_MULTI_CHAR}|,(?=$|\s|{_NON_WORD}|{_MULTI_CHAR}))
        |
        \S
    )""",
    re.VERBOSE,
)
_REALIGN = re.compile(r"[\"')\]}]+?(?:\s+|(?=--)|$)", re.MULTILINE)
_ELLIPSIS = re.compile(r"^\.\.+$")
_INITIAL = re.compile(r"^[^\W\d]\.$")
_NUMBER = re.compile(r"^-?[\.,]?\d[\d,\.-]*\.?$")


def _is_number(token: str) -> bool:
    body = token[:-1] if token.endswith(".") and len(token) > 1 else token
    return bool(_NUMBER.match(body)) or bool(_NUMBER.match(token))


def _breaks_after(token: str, following: str) -> bool:
    if token in (".", "?", "!"):
        return True
    if not token.endswith(".") or token.endswith("..") or _ELLIPSIS.match(token):
        return False
    # initials and numbers are not boundaries before lowercase words or
    # sentence-internal punctuation; initials also not before capitals
    initial = bool(_INITIAL.match(token))
    if initial or _is_number(token):
        if following in (";", ":", ",", ".", "!", "?") or following[:1].islower():
            return False
        if initial and following[:1].isupper():
            return False
    return True


def _context_has_break(context: str) -> bool:
    tokens = [tok for line in context.split("\n") for tok in _PUNKT_WORD.findall(line)]
    return any(_breaks_after(a, b) for a, b in zip(tokens, tokens[1:]))


def _last_whitespace(text: str) -> int:
    for i in range(len(text) - 1, -1, -1):
        if text[i].isspace():
            return i
    return 0


def _candidate_contexts(text: str):
    # only the last candidate of a run without intervening whitespace counts
    prev_slice = slice(0, 0)
    prev_match = None
    for match in _PERIOD_CONTEXT.finditer(text):
        before = text[prev_slice.stop : match.start()]
        ws = _last_whitespace(before)
        word_start = ws + prev_slice.stop + 1 if ws else prev_slice.start
        word = slice(word_start, match.start())
        if prev_match is not None and prev_slice.stop <= word.start:
            yield prev_match, text[prev_slice] + prev_match.group() + prev_match.group("after")
        prev_match, prev_slice = match, word
    if prev_match is not None:
        yield prev_match, text[prev_slice] + prev_match.group() + prev_match.group("after")


def normalize(text: str) -> str:
    """Map typographic quotes, dashes and the ellipsis character to ASCII."""
    return text.translate(_TRANSLATION)


def split_sentences(text: str) -> list[str]:
    """Split *text* into sentences, Punkt style.

    Closing quotes and brackets that directly follow a boundary are moved
    back onto the sentence they close.
    """
    spans: list[tuple[int, int]] = []
    last = 0
    for match, context in _candidate_contexts(text):
        if _context_has_break(context):
            spans.append((last, match.end()))
            last = match.start("next") if match.group("next") else match.end()
    spans.append((last, len(text.rstrip())))

    sentences: list[str] = []
    shift = 0
    for i, (start, stop) in enumerate(spans):
        start += shift
        shift = 0
        if i + 1 < len(spans):
            nxt = spans[i + 1][0]
            m = _REALIGN.match(text, nxt, spans[i + 1][1])
            if m:
                sentences.append(text[start : nxt + len(m.group(0).rstrip())])
                shift = m.end() - nxt
                continue
        if text[start:stop]:
            sentences.append(text[start:stop])
    return sentences


def tokenize_sentence(sentence: str) -> list[str]:
    """Tokenize one sentence with the ordered Treebank rule set."""
    text = sentence
    for pattern, repl in _STARTING_QUOTES:
        text = pattern.sub(repl, text)
    for pattern, repl in _PUNCTUATION:
        text = pattern.sub(repl, text)
    text = _BRACKETS[0].sub(_BRACKETS[1], text)
    text = _DOUBLE_DASH[0].sub(_DOUBLE_DASH[1], text)
    text = f" {text} "
    for pattern, repl in _ENDING_QUOTES:
        text = pattern.sub(repl, text)
    for pattern in _FUSED:
        text = pattern.sub(r" \1 \2 ", text)
    return text.split()


def tokenize(text: str) -> list[str]:
    """Return the Treebank-style tokens of *text*, in input order."""
    tokens: list[str] = []
    for sentence in split_sentences(normalize(text)):
        tokens.extend(tokenize_sentence(sentence))
    return tokens


def is_excluded(token: str) -> bool:
    """True iff *token* occurs contiguously inside ``string.punctuation``."""
    return token in PUNCTUATION


def count_words(text: str) -> int:
    """Number of non-punctuation tokens in *text*."""
    return sum(1 for token in tokenize(text) if not is_excluded(token))
