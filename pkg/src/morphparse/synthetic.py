"""A small English-like grammar that emits fully annotated CoNLL-U trees.

Used for overfit checks and fixtures where no UD treebank is at hand. Every
column is filled: irregular lemmata, UD features, XPOS (PTB-style), heads and
a mix of content and function relations including subtyped ones.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np

from .conllu import Sentence, Token, Treebank

NOUNS = {
    "dog": "dogs", "cat": "cats", "bird": "birds", "child": "children", "house": "houses",
    "tree": "trees", "river": "rivers", "box": "boxes", "city": "cities", "mouse": "mice",
    "teacher": "teachers", "garden": "gardens", "book": "books", "farmer": "farmers", "fox": "foxes",
}
ADJECTIVES = ["big", "small", "red", "old", "young", "quiet", "happy", "green"]
# lemma -> (3rd person singular present, past)
TRANSITIVE = {
    "see": ("sees", "saw"), "chase": ("chases", "chased"), "find": ("finds", "found"),
    "like": ("likes", "liked"), "watch": ("watches", "watched"), "carry": ("carries", "carried"),
    "eat": ("eats", "ate"),
}
INTRANSITIVE = {
    "sleep": ("sleeps", "slept"), "run": ("runs", "ran"), "walk": ("walks", "walked"),
    "sing": ("sings", "sang"), "wait": ("waits", "waited"),
}
PREPOSITIONS = ["in", "near", "on", "with", "under"]
ADVERBS = ["quickly", "often", "slowly", "loudly"]
# form -> (person, number, gender or None) for nominative; accusative form alongside
PRONOUNS = {
    "he": ("him", "3", "Sing", "Masc"), "she": ("her", "3", "Sing", "Fem"),
    "they": ("them", "3", "Plur", None), "we": ("us", "1", "Plur", None), "I": ("me", "1", "Sing", None),
}


class _Builder:
    def __init__(self):
        self.tokens: List[Token] = []

    def add(self, form: str, lemma: str, upos: str, xpos: str, feats: Optional[Dict[str, str]] = None) -> Token:
        tok = Token(len(self.tokens) + 1, form, lemma, upos, xpos, dict(feats or {}))
        self.tokens.append(tok)
        return tok

    @staticmethod
    def attach(dep: Token, head: Token, deprel: str) -> None:
        dep.head = head.id
        dep.deprel = deprel


class SyntheticGrammar:
    """Random sentence generator; the same seed yields the same treebank."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def _choice(self, items):
        return items[int(self.rng.integers(len(items)))]

    def _chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def noun_phrase(self, b: _Builder, allow_pp: bool = True) -> Tuple[Token, str]:
        """Returns the head noun and its number."""
        plural = self._chance(0.4)
        number = "Plur" if plural else "Sing"
        if plural:
            det = self._choice([("the", {"Definite": "Def", "PronType": "Art"}, "DT"),
                                ("these", {"Number": "Plur", "PronType": "Dem"}, "DT"), None])
        else:
            det = self._choice([("the", {"Definite": "Def", "PronType": "Art"}, "DT"),
                                ("a", {"Definite": "Ind", "PronType": "Art"}, "DT"),
                                ("this", {"Number": "Sing", "PronType": "Dem"}, "DT")])
        det_tok = None
        if det is not None:
            form, feats, xpos = det
            det_tok = b.add(form, form, "DET", xpos, feats)
        adjs = []
        for _ in range(int(self.rng.choice([0, 0, 1, 2]))):
            a = self._choice(ADJECTIVES)
            adjs.append(b.add(a, a, "ADJ", "JJ", {"Degree": "Pos"}))
        lemma = self._choice(sorted(NOUNS))
        form = NOUNS[lemma] if plural else lemma
        noun = b.add(form, lemma, "NOUN", "NNS" if plural else "NN", {"Number": number})
        if det_tok is not None:
            b.attach(det_tok, noun, "det")
        for a in adjs:
            b.attach(a, noun, "amod")
        if allow_pp and self._chance(0.2):
            inner = self.prepositional(b)
            b.attach(inner, noun, "nmod")
        return noun, number

    def prepositional(self, b: _Builder) -> Token:
        p = self._choice(PREPOSITIONS)
        prep = b.add(p, p, "ADP", "IN")
        noun, _ = self.noun_phrase(b, allow_pp=False)
        b.attach(prep, noun, "case")
        return noun

    def pronoun(self, b: _Builder, case: str) -> Tuple[Token, str, str]:
        nom = self._choice(sorted(PRONOUNS))
        acc, person, number, gender = PRONOUNS[nom]
        feats = {"Case": case, "Number": number, "Person": person, "PronType": "Prs"}
        if gender:
            feats["Gender"] = gender
        form = nom if case == "Nom" else acc
        return b.add(form, nom.lower() if nom != "I" else "I", "PRON", "PRP", feats), person, number

    def clause(self, b: _Builder) -> Token:
        if self._chance(0.3):
            subj, person, number = self.pronoun(b, "Nom")
        else:
            subj, number = self.noun_phrase(b)
            person = "3"
        transitive = self._chance(0.6)
        lemma = self._choice(sorted(TRANSITIVE if transitive else INTRANSITIVE))
        third, past = (TRANSITIVE if transitive else INTRANSITIVE)[lemma]
        aux = neg = None
        if self._chance(0.2):
            aux = b.add("will", "will", "AUX", "MD", {"VerbForm": "Fin"})
            if self._chance(0.3):
                neg = b.add("not", "not", "PART", "RB", {"Polarity": "Neg"})
            verb = b.add(lemma, lemma, "VERB", "VB", {"VerbForm": "Inf"})
        elif self._chance(0.5):
            verb = b.add(past, lemma, "VERB", "VBD", {"Mood": "Ind", "Tense": "Past", "VerbForm": "Fin"})
        elif person == "3" and number == "Sing":
            verb = b.add(third, lemma, "VERB", "VBZ",
                         {"Mood": "Ind", "Number": "Sing", "Person": "3", "Tense": "Pres", "VerbForm": "Fin"})
        else:
            verb = b.add(lemma, lemma, "VERB", "VBP", {"Mood": "Ind", "Tense": "Pres", "VerbForm": "Fin"})
        b.attach(subj, verb, "nsubj")
        if aux is not None:
            b.attach(aux, verb, "aux")
        if neg is not None:
            b.attach(neg, verb, "advmod:neg")
        if transitive:
            if self._chance(0.25):
                obj, _, _ = self.pronoun(b, "Acc")
            else:
                obj, _ = self.noun_phrase(b)
            b.attach(obj, verb, "obj")
        if self._chance(0.35):
            b.attach(self.prepositional(b), verb, "obl")
        if self._chance(0.25):
            a = self._choice(ADVERBS)
            b.attach(b.add(a, a, "ADV", "RB"), verb, "advmod")
        return verb

    def sentence(self, sent_id: Optional[str] = None) -> Sentence:
        b = _Builder()
        root = self.clause(b)
        root.head, root.deprel = 0, "root"
        if self._chance(0.2):
            comma = b.add(",", ",", "PUNCT", ",")
            c = self._choice(["and", "but"])
            cc = b.add(c, c, "CCONJ", "CC")
            second = self.clause(b)
            b.attach(second, root, "conj")
            b.attach(cc, second, "cc")
            b.attach(comma, second, "punct")
        b.attach(b.add(".", ".", "PUNCT", "."), root, "punct")
        first = b.tokens[0]
        if first.form != "I":
            first.form = first.form[0].upper() + first.form[1:]
        comments = []
        if sent_id is not None:
            comments.append(f"# sent_id = {sent_id}")
        comments.append("# text = " + _detokenize([t.form for t in b.tokens]))
        return Sentence(b.tokens, comments)

    def treebank(self, n: int, prefix: str = "synth") -> Treebank:
        return Treebank([self.sentence(f"{prefix}-{i + 1}") for i in range(n)])


def _detokenize(forms: List[str]) -> str:
    out = ""
    for f in forms:
        if out and f not in (".", ","):
            out += " "
        out += f
    return out


def generate_treebank(n: int, seed: int = 0, prefix: str = "synth") -> Treebank:
    return SyntheticGrammar(seed).treebank(n, prefix=prefix)
