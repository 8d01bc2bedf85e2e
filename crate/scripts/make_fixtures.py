#!/usr/bin/env python3
"""Regenerate the synthetic fixture corpora under fixtures/.

Output is deterministic; rerunning produces identical bytes.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def t(text):
    return {"role": "teacher", "text": text}


def s(text):
    return {"role": "student", "text": text}


APPENDIX = [
    {
        "id": "0701",
        "utterances": [
            s("ok,"),
            s("people who visited the museum after its regeneration were more pleased than the visitors in the years before"),
            s("I'm not sure if I can use regeneration like a synonym"),
            t("Um...good idea but not quite right here I'm afraid....maybe for e.g an atea of a city or a whe industry..."),
            t("Sorry...area of a city... or whole industry"),
            s("yes I see"),
            s("because it's the same thing in Italian"),
        ],
        "response": "But e.g. pleased with their visit = good idea",
    },
    {
        "id": "1062",
        "utterances": [
            s("Natural gas account for 20% of the electricity in Australia in 1980."),
            t("yes that's great! What verb tense do you need?"),
            s("Natural gas made up 20% of electricity in Australia in 1980."),
            t("Yes perfect! Good past simple too"),
            t("Account for in the past = accounted for"),
            s("so...Natural gas accounted for 20 % of electricity in Australia in 1980."),
            s("ok..thanks"),
            s("I got it"),
        ],
        "response": "Yes that's great - that would look good in an answer",
    },
    {
        "id": "0298",
        "utterances": [
            t("It's a bit random to be honest...if we add certain words then sometimes the singular becomes more likely e.g. the fire service is..."),
            t("Yes we often say the government are..."),
            t("a bit less formal but common yes...like we're thinking of them as a bunch of people"),
            s("ohh I didn't know that..."),
            s("But I kind of get it haha"),
            t("No I can see it might seem a bit strange"),
            t("By the way I think the plural form is less common the USA"),
        ],
        "response": "in the US",
    },
    {
        "id": "1674",
        "utterances": [
            s("plug it out"),
            t("nope! unplug it!"),
            t("A plug is also the bit at the end of a cable that you put into an electric socket"),
            t("Plugs can look different in different countries. For example, in Ukraine, a plug has two pins"),
            t("Do you know what I'm talking about?"),
            s("yes"),
        ],
        "response": "Ok great! So you know that if you want to turn something off you unplug it, right?",
    },
    {
        "id": "1650",
        "utterances": [
            s("informally you hear people say e.g. So I go to the yoga class and it's so hard etc Do that people mean that they go everyday or everyweek and suffer?"),
            t("By the way, the structure:  'I changed my idea' is a bit weird...normal - e.g. it (the experience) changed my idea"),
            s("I changed my mind would sound better??"),
        ],
        "response": "Ah well that would be normal in that meaning but no - i mean to describe a specific past situation",
    },
]

# Hand-written dialogues. h01..h05 are the pinned few-shot exemplars used by
# the golden prompts; h18..h20 carry bare acknowledgements.
HANDWRITTEN = [
    {
        "id": "h01",
        "utterances": [
            s("yesterday I have went to the cinema with my sister"),
            t("nice! what did you see?"),
            s("a comedy, it was very funny"),
        ],
        "response": "Sounds fun! Just a small correction: we say 'I went' in the past simple, not 'I have went'.",
    },
    {
        "id": "h02",
        "utterances": [
            s("what is the difference between 'borrow' and 'lend'?"),
            t("good question!"),
        ],
        "response": "You borrow something from someone, and you lend something to someone. For example, can you lend me a pen?",
    },
    {
        "id": "h03",
        "utterances": [
            t("how was your weekend?"),
            s("it was relaxing, I stayed in home"),
        ],
        "response": "Glad to hear it! We usually say 'stayed at home' or just 'stayed home' - the preposition is 'at', not 'in'.",
    },
    {
        "id": "h04",
        "utterances": [
            s("I am agree with your opinion"),
            t("hmm"),
            s("is it wrong?"),
        ],
        "response": "Almost! 'Agree' is already a verb, so you can say 'I agree with your opinion' without 'am'.",
    },
    {
        "id": "h05",
        "utterances": [
            t("Can you describe your hometown in three adjectives?"),
            s("quiet, green and boring"),
            s("maybe boring is too negative"),
        ],
        "response": "Those are good adjectives! Instead of boring you could say 'peaceful' or 'sleepy', which sound a bit more positive.",
    },
    {
        "id": "h06",
        "utterances": [
            s("I want to improve my writing for the exam"),
            t("great, which part is hardest for you?"),
            s("linking words, I always use 'and'"),
        ],
        "response": "Try using words like 'however', 'moreover' and 'as a result' to connect your sentences more clearly.",
    },
    {
        "id": "h07",
        "utterances": [
            s("how do you pronounce 'colonel'?"),
        ],
        "response": "It sounds like 'kernel' - the spelling and pronunciation are very different in this word!",
    },
    {
        "id": "h08",
        "utterances": [
            t("what did you do last night?"),
            s("I watched TV and then I sleeped"),
        ],
        "response": "Good, but 'sleep' is irregular, so the past tense is 'slept': I watched TV and then I slept.",
    },
    {
        "id": "h09",
        "utterances": [
            s("is 'informations' correct?"),
            t("let's think about it"),
        ],
        "response": "'Information' is uncountable, so we don't add an s. You can say 'some information' or 'a piece of information'.",
    },
    {
        "id": "h10",
        "utterances": [
            s("The graph show that sales increased"),
            t("good start"),
            s("should I add more details?"),
        ],
        "response": "Yes, add the figures and remember subject-verb agreement: 'the graph shows' with an s.",
    },
    {
        "id": "h11",
        "utterances": [
            t("what are your plans for the summer?"),
            s("I will going to visit Spain"),
        ],
        "response": "Lovely! Use either 'I will visit' or 'I am going to visit' - not both together.",
    },
    {
        "id": "h12",
        "utterances": [
            s("what does 'under the weather' mean?"),
        ],
        "response": "It's an idiom meaning a bit ill, for example 'I'm feeling under the weather today'.",
    },
    {
        "id": "h13",
        "utterances": [
            s("I have a question about articles"),
            t("sure, go ahead"),
            s("why do we say 'the sun' but 'a star'?"),
        ],
        "response": "There is only one sun, so we use 'the', but there are many stars, so 'a' means any one of them.",
    },
    {
        "id": "h14",
        "utterances": [
            t("tell me about your job"),
            s("I am working as engineer since five years"),
        ],
        "response": "Interesting! A more natural sentence is 'I have worked as an engineer for five years'.",
    },
    {
        "id": "h15",
        "utterances": [
            s("can I say 'make a photo'?"),
            t("people will understand you"),
        ],
        "response": "But the usual collocation in English is 'take a photo', not 'make a photo'.",
    },
    {
        "id": "h16",
        "utterances": [
            s("my friend said the film was 'a bit meh'"),
            s("what is meh?"),
        ],
        "response": "'Meh' is very informal and shows you don't care much - it means the film was just average.",
    },
    {
        "id": "h17",
        "utterances": [
            t("what would you do if you won the lottery?"),
            s("if I would win I would buy a house"),
        ],
        "response": "Nice idea! In the second conditional we say 'if I won, I would buy a house' - no 'would' after 'if'.",
    },
    {
        "id": "h18",
        "utterances": [
            t("shall we continue next week?"),
            s("yes please"),
        ],
        "response": "sure",
    },
    {
        "id": "h19",
        "utterances": [
            s("I finished the exercise"),
        ],
        "response": "okay",
    },
    {
        "id": "h20",
        "utterances": [
            s("hello, are you there?"),
        ],
        "response": "hi",
    },
]

# Filter fixture: the 20 hand-written dialogues with h17 swapped for 1674.
FILTER_SET = [d for d in HANDWRITTEN if d["id"] != "h17"] + [APPENDIX[3]]

STUDENT_OPENERS = [
    "I don't understand when to use '{w}'",
    "is '{w}' formal or informal?",
    "can you give me an example with '{w}'?",
    "my teacher said '{w}' is wrong here",
    "I wrote '{w}' in my essay",
    "how do I spell '{w}'?",
]
TEACHER_PROMPTS = [
    "good question, where did you see it?",
    "let's look at it together",
    "can you show me the sentence?",
    "ok, what do you think it means?",
    "interesting, tell me more",
]
STUDENT_FOLLOWUPS = [
    "in a newspaper article",
    "I think it means something like 'often'",
    "here: {w} is very important for me",
    "I'm not sure",
    "my friend uses it a lot",
    "ok",
    "thanks",
]
TEACHER_ANSWERS = [
    "'{w}' is quite formal, so it suits essays better than chat.",
    "Here '{w}' works as a {p}, so the sentence structure needs to change a little.",
    "Careful with word order: where you put '{w}' can change the meaning of the sentence.",
    "Good! Another word with a similar meaning to '{w}' is '{syn}'.",
    "Remember that '{w}' is spelled with double letters in the middle.",
    "In spoken English people often drop '{w}' completely.",
    "ok",
    "great",
    "yes",
]
WORDS = [
    ("nevertheless", "however", "adverb"),
    ("accommodation", "housing", "noun"),
    ("eventually", "finally", "adverb"),
    ("necessary", "needed", "adjective"),
    ("recommend", "suggest", "verb"),
    ("whereas", "while", "conjunction"),
    ("occasionally", "sometimes", "adverb"),
    ("beneficial", "useful", "adjective"),
    ("assume", "suppose", "verb"),
    ("issue", "problem", "noun"),
    ("approximately", "about", "adverb"),
    ("obtain", "get", "verb"),
]


def generated(n, seed):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        w, syn, pos = rng.choice(WORDS)
        turns = [s(rng.choice(STUDENT_OPENERS).format(w=w))]
        for _ in range(rng.randint(0, 5)):
            if turns[-1]["role"] == "student" or rng.random() < 0.3:
                turns.append(t(rng.choice(TEACHER_PROMPTS)))
            else:
                turns.append(s(rng.choice(STUDENT_FOLLOWUPS).format(w=w)))
        response = rng.choice(TEACHER_ANSWERS).format(w=w, syn=syn, p=pos)
        out.append({"id": f"g{i + 1:03d}", "utterances": turns, "response": response})
    return out


def dev_set(n, seed):
    return [
        {"id": f"d{i + 1:03d}", "utterances": d["utterances"]}
        for i, d in enumerate(generated(n, seed))
    ]


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def write_json(path, records):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(records, f, ensure_ascii=False, indent=2)
        f.write("\n")


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    write_json(ROOT / "appendix.json", APPENDIX)
    write_json(ROOT / "handwritten.json", HANDWRITTEN)
    write_json(ROOT / "filter_set.json", FILTER_SET)
    train = APPENDIX + HANDWRITTEN + generated(100 - len(APPENDIX) - len(HANDWRITTEN), 11)
    assert len(train) == 100
    write_jsonl(ROOT / "train.jsonl", train)
    write_jsonl(ROOT / "dev.jsonl", dev_set(20, 23))


if __name__ == "__main__":
    main()
