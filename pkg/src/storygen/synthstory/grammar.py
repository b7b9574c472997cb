"""Closed sentence templates and rule-based pronoun injection.

The corpus language is a two-template grammar: an opening sentence that
names every character and the background ("Tony and Lisa walk on the
sand."), and follow-up sentences with a bare subject and verb ("They
jump."). Pronoun injection rewrites repeat subject mentions so that only
the opening sentence carries explicit names.
"""

from __future__ import annotations

import re

GRAMMAR_VERSION = "1"

PRONOUNS = ("he", "she", "they")

# Lowercase words of the grammar that may legitimately start a sentence
# capitalized without being character names.
_NON_NAME_WORDS = {"the", "a", "an", "and", "on", "it", *PRONOUNS}

_WORD_RE = re.compile(r"[A-Za-z]+|[^A-Za-z\s]")


class UnknownEntityError(KeyError):
    """A capitalized token looks like an entity but is not in the map."""

    def __init__(self, token: str):
        super().__init__(token)
        self.token = token

    def __str__(self) -> str:
        return f"unknown entity name: {self.token!r}"


def split_words(sentence: str) -> list[str]:
    """Split into word and punctuation tokens, preserving case."""
    return _WORD_RE.findall(sentence)


def join_words(tokens: list[str]) -> str:
    """Inverse of split_words: spaces between words, none before punctuation."""
    parts: list[str] = []
    for tok in tokens:
        if parts and (tok[0].isalnum()):
            parts.append(" ")
        parts.append(tok)
    return "".join(parts)


def opening_sentence(names: tuple[str, ...], verb: tuple[str, str], background: str) -> str:
    subject = " and ".join(names)
    form = verb[0] if len(names) == 1 else verb[1]
    return f"{subject} {form} on the {background.lower()}."


def follow_sentence(names: tuple[str, ...], verb: tuple[str, str]) -> str:
    subject = " and ".join(names)
    form = verb[0] if len(names) == 1 else verb[1]
    return f"{subject} {form}."


def count_references(sentences: list[str]) -> int:
    """Number of pronoun tokens across the sentences."""
    total = 0
    for sentence in sentences:
        for tok in split_words(sentence):
            if tok.lower() in PRONOUNS:
                total += 1
    return total


def inject_coreferences(sentences: list[str], entities: dict[str, str]) -> list[str]:
    """Replace repeat entity mentions with pronouns.

    The first mention of each entity (including a first joint "X and Y"
    mention) is kept verbatim. Later single mentions become the mapped
    pronoun; later joint mentions of two entities become "they". A
    capitalized token that is neither a known entity nor a grammar word
    raises UnknownEntityError.
    """
    seen: set[str] = set()
    out: list[str] = []
    for sentence in sentences:
        tokens = split_words(sentence)
        for tok in tokens:
            if tok[0].isupper() and tok not in entities and tok.lower() not in _NON_NAME_WORDS:
                raise UnknownEntityError(tok)

        rewritten: list[str] = []
        i = 0
        while i < len(tokens):
            tok = tokens[i]
            if tok in entities:
                # Joint mention "X and Y"?
                if (
                    i + 2 < len(tokens)
                    and tokens[i + 1].lower() == "and"
                    and tokens[i + 2] in entities
                ):
                    pair = (tok, tokens[i + 2])
                    if all(name in seen for name in pair):
                        rewritten.append(_match_case("they", at_start=not rewritten))
                    else:
                        rewritten.extend([pair[0], "and", pair[1]])
                        seen.update(pair)
                    i += 3
                    continue
                if tok in seen:
                    rewritten.append(_match_case(entities[tok], at_start=not rewritten))
                else:
                    rewritten.append(tok)
                    seen.add(tok)
                i += 1
                continue
            rewritten.append(tok)
            i += 1
        out.append(join_words(rewritten))
    return out


def _match_case(pronoun: str, at_start: bool) -> str:
    return pronoun.capitalize() if at_start else pronoun
