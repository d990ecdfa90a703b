"""Regenerate the bundled toy SQuAD file and the toy-LM corpus.

Answers are located with str.index so character offsets are exact, and
every example is checked against the package tokenizer/aligner before
writing. Run from the repo root:

    python3 scripts/gen_toy_squad.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from reembedqa.data import align_answer, tokenize  # noqa: E402

ARTICLES = [
    ("Harlow River", [(
        "The Harlow River begins in the Calder Hills and flows west for 212 "
        "kilometers before reaching the sea at Port Ellen. Its largest "
        "tributary is the Brack, which joins it near the town of Veslow.",
        [
            ("Where does the Harlow River begin?", "the Calder Hills"),
            ("How long is the Harlow River?", "212 kilometers"),
            ("What is the largest tributary of the Harlow River?", "the Brack"),
            ("Near which town does the Brack join the Harlow River?", "Veslow"),
        ])]),
    ("Mira Tolvan", [(
        "Mira Tolvan was an engineer born in 1871 in the village of Askerud. "
        "She designed the first rotating canal lock and patented a safety "
        "valve for steam boilers in 1902.",
        [
            ("When was Mira Tolvan born?", "1871"),
            ("Where was Mira Tolvan born?", "the village of Askerud"),
            ("What kind of lock did Mira Tolvan design?", "rotating canal lock"),
            ("In what year did Mira Tolvan patent a safety valve?", "1902"),
        ])]),
    ("Lantern Festival of Quoss", [(
        "The lantern festival of Quoss is held every spring on the night of "
        "the first full moon. Villagers float paper lanterns down the canal "
        "and share a meal of barley soup and smoked eel.",
        [
            ("In which season is the lantern festival of Quoss held?", "spring"),
            ("What do villagers float down the canal?", "paper lanterns"),
            ("What soup is shared at the festival?", "barley soup"),
            ("On the night of what moon is the festival held?", "the first full moon"),
        ])]),
    ("Bluestone", [(
        "Kelvarite is a blue mineral first described in 1928 by the chemist "
        "Anna Rheed. It forms hexagonal crystals, melts at 1340 degrees, and "
        "is mined mainly in the Dorvik quarries.",
        [
            ("What color is kelvarite?", "blue"),
            ("Who first described kelvarite?", "Anna Rheed"),
            ("At what temperature does kelvarite melt?", "1340 degrees"),
            ("Where is kelvarite mainly mined?", "the Dorvik quarries"),
        ])]),
    ("Vey Observatory", [(
        "The Vey Observatory sits on Mount Arren at an altitude of 2950 "
        "meters. Completed in 1963, it houses a 4.2 meter telescope named "
        "Callisto, the largest in the southern province.",
        [
            ("On which mountain does the Vey Observatory sit?", "Mount Arren"),
            ("When was the Vey Observatory completed?", "1963"),
            ("What is the telescope at the Vey Observatory named?", "Callisto"),
            ("At what altitude does the observatory sit?", "2950 meters"),
        ])]),
    ("Port Sellen Bridge", [(
        "The iron bridge at Port Sellen crosses the Harlow River estuary. "
        "Built by the engineer Tomas Grell between 1888 and 1891, it carries "
        "two rail tracks and a narrow footpath.",
        [
            ("What does the iron bridge at Port Sellen cross?", "the Harlow River estuary"),
            ("Who built the bridge at Port Sellen?", "Tomas Grell"),
            ("How many rail tracks does the bridge carry?", "two"),
            ("Besides rail tracks, what does the bridge carry?", "a narrow footpath"),
        ])]),
    ("Composer Edran Voll", [(
        "Edran Voll composed nine symphonies and a famous opera called The "
        "Glass Orchard. He worked as court musician in Brell from 1790 until "
        "his death in 1824.",
        [
            ("How many symphonies did Edran Voll compose?", "nine"),
            ("What is the name of Edran Voll's famous opera?", "The Glass Orchard"),
            ("In which city did Edran Voll work as court musician?", "Brell"),
            ("In what year did Edran Voll die?", "1824"),
        ])]),
    ("Saffron Custard", [(
        "Traditional saffron custard from Quoss uses goat milk, four egg "
        "yolks, and a pinch of ground kelvarite salt. The custard is baked "
        "slowly in clay pots for ninety minutes.",
        [
            ("What milk is used in traditional saffron custard?", "goat milk"),
            ("How many egg yolks does the custard use?", "four"),
            ("In what pots is the custard baked?", "clay pots"),
            ("For how long is the custard baked?", "ninety minutes"),
        ])]),
]

EXTRA_CORPUS = [
    "The river flows west through the hills to the sea.",
    "An engineer patented the valve after many years of work.",
    "Villagers gather every spring for the festival of lanterns.",
    "The mineral forms crystals that melt at high temperature.",
    "A large telescope was completed on the mountain in 1963.",
    "The bridge carries rail tracks across the wide estuary.",
    "The composer wrote his opera at the court of Brell.",
    "The custard is baked in pots until it sets.",
    "Rare words need context to be understood well.",
    "Common words like the and a appear in every sentence.",
]


def main():
    data = []
    qid = 0
    for title, paragraphs in ARTICLES:
        para_entries = []
        for context, qas in paragraphs:
            qa_entries = []
            for question, answer in qas:
                qid += 1
                start = context.index(answer)
                tokens = tokenize(context)
                align_answer(tokens, answer, start)  # raises if misaligned
                qa_entries.append({
                    "id": f"toy-{qid:04d}",
                    "question": question,
                    "answers": [{"text": answer, "answer_start": start}],
                })
            para_entries.append({"context": context, "qas": qa_entries})
        data.append({"title": title, "paragraphs": para_entries})

    out_dir = Path(__file__).resolve().parent.parent / "src" / "reembedqa" / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    squad = {"version": "1.1", "data": data}
    (out_dir / "squad_toy.json").write_text(json.dumps(squad, indent=1))
    print(f"wrote {qid} examples to {out_dir / 'squad_toy.json'}")

    corpus_lines = []
    for _, paragraphs in ARTICLES:
        for context, qas in paragraphs:
            for sentence in context.split(". "):
                sentence = sentence.strip()
                if sentence:
                    corpus_lines.append(sentence.rstrip(".") + ".")
            for question, _ in qas:
                corpus_lines.append(question)
    corpus_lines.extend(EXTRA_CORPUS)
    (out_dir / "lm_corpus.txt").write_text("\n".join(corpus_lines) + "\n")
    print(f"wrote {len(corpus_lines)} corpus lines to {out_dir / 'lm_corpus.txt'}")


if __name__ == "__main__":
    main()
