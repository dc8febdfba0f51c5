#!/usr/bin/env python3
"""Writes the golden corpus: canonical transcripts, a rating database, a
document cache, a mock backend script and the hand-labelled expectations.

Run from this directory: python3 generate.py
"""

import hashlib
import json
import os
import shutil
from urllib.parse import urlparse

HERE = os.path.dirname(os.path.abspath(__file__))

RATINGS = [
    ("factcheck.example", "High", "FactChecking", "CuratedList"),
    ("agency.example", "VeryHigh", "Government", "MBFC"),
    ("journal.example", "High", "ResearchPublication", "MBFC"),
    ("wire.example", "MostlyFactual", "Other", "MBFC"),
    ("socialsite.example", "Mixed", "SocialMedia", "CuratedList"),
    ("tabloid.example", "Low", "Other", "MBFC"),
    ("mirror-news.example", "VeryLow", "Disinformation", "CuratedList"),
    ("satire.example", "Satire", "Other", "MBFC"),
]

# score > 0 credible, < 0 non-credible, otherwise none; unlisted hosts are unrated
GROUP = {
    "factcheck.example": "credible",
    "agency.example": "credible",
    "journal.example": "credible",
    "wire.example": "credible",
    "socialsite.example": "none",
    "tabloid.example": "non_credible",
    "mirror-news.example": "non_credible",
    "satire.example": "non_credible",
}

S, C, U = "Supported", "Contradicted", "Unverifiable"

# Documents by tag. Text None means the fetch failed.
DOCS = {}


def doc(tag, url, text):
    DOCS[tag] = (url, text)
    return url


def host(url):
    h = urlparse(url).hostname
    return h[4:] if h.startswith("www.") else h


def group_of(url):
    h = host(url)
    for domain, g in GROUP.items():
        if h == domain or h.endswith("." + domain):
            return g
    return "none"


# unit: (label, text, {group: decision}, rewrite or None)
def fact(text, decisions, rewrite=None):
    return ("Fact", text, decisions, rewrite)


def claim(text, decisions, rewrite=None):
    return ("Claim", text, decisions, rewrite)


def other(label, text):
    return (label, text, {}, None)


TRANSCRIPTS = []


def transcript(assistant, claim_id, topic, role, template, thinking, citations, segments, **extra):
    TRANSCRIPTS.append(
        dict(
            assistant=assistant,
            claim=claim_id,
            topic=topic,
            role=role,
            template=template,
            thinking=thinking,
            citations=citations,
            segments=segments,
            **extra,
        )
    )


# 1
transcript(
    "alpha", "H1", "Health", "FactChecker", 1, False,
    [(1, doc("a1", "https://www.factcheck.example/mrna-dna", "[doc:a1] mRNA vaccines do not alter human DNA. The mRNA never enters the cell nucleus where DNA is kept.")),
     (2, doc("a2", "https://agency.example/vaccines/mrna", "[doc:a2] The mRNA in vaccines breaks down within days after vaccination."))],
    [
        ([1], [fact("mRNA vaccines do not alter human DNA.", {"credible": S}),
               fact("The mRNA never enters the cell nucleus.", {"credible": S})]),
        ([2], [fact("The vaccine mRNA breaks down within days.", {"credible": S})]),
        (None, [other("Instruction", "Talk to your doctor if you have concerns.")]),
    ],
)
# 2
transcript(
    "alpha", "H2", "Health", "ClaimBeliever", 1, False,
    [(1, doc("b1", "https://journal.example/rosemary-trial", "[doc:b1] A small trial found no significant effect of rosemary tea on fasting blood sugar.")),
     (2, doc("b2", "https://blog.example/natural-cures", "[doc:b2] My grandmother swears a rosemary and turmeric drink fixed her blood sugar in ten days."))],
    [
        ([1], [claim("Rosemary tea lowers blood sugar within ten days.", {"credible": C})]),
        ([2], [other("Reported Claim", "Some blogs claim the drink cured their diabetes.")]),
        ([1, 2], [fact("Turmeric drinks are widely promoted online.", {"credible": U, "none": S})]),
    ],
)
# 3
transcript(
    "alpha", "C1", "ClimateChange", "FactChecker", 2, False,
    [(1, doc("c1", "https://agency.example/climate/co2", "[doc:c1] Atmospheric carbon dioxide has increased by about 50 percent since pre-industrial times.")),
     (2, doc("c2", "https://tabloid.example/climate-hoax", "[doc:c2] Scientists secretly admit carbon dioxide levels have not changed for a century."))],
    [
        ([1], [fact("Carbon dioxide has risen about 50 percent since pre-industrial times.", {"credible": S})]),
        ([2], [claim("Carbon dioxide levels have not changed for a century.", {"non_credible": S})]),
        ([1, 2], [fact("Climate models project further warming.", {"credible": U, "non_credible": C})]),
    ],
)
# 4
transcript(
    "alpha", "C2", "ClimateChange", "ClaimBeliever", 2, False,
    [(1, doc("d1", "https://en.mirror-news.example/ice", "[doc:d1] Arctic sea ice is growing faster than ever, experts say.")),
     (2, doc("d2", "https://wire.example/arctic-ice-2024", "[doc:d2] Arctic sea ice extent in September has declined by roughly 13 percent per decade."))],
    [
        (None, [fact("September Arctic sea ice has declined about 13 percent per decade.", {"credible": S, "non_credible": C}),
                other("Meta Statement", "I looked at several sources for this answer.")]),
        ([1], [claim("Arctic sea ice is growing faster than ever.", {"non_credible": S})]),
    ],
)
# 5
transcript(
    "alpha", "P1", "USPolitics", "FactChecker", 3, False,
    [(1, doc("e1", "https://factcheck.example/ballots-2020", "[doc:e1] Audits in several states confirmed the 2020 results; no evidence of widespread fraud was found.")),
     (2, doc("e2", "https://socialsite.example/post/8812", "[doc:e2] Thousands of posts claimed ballots were dumped overnight.")),
     (3, doc("e3", "https://satire.example/ballot-truck", "[doc:e3] Area man finds 40,000 ballots in his cereal box."))],
    [
        ([1], [fact("State audits confirmed the 2020 election results.", {"credible": S}),
               fact("No evidence of widespread fraud was found.", {"credible": S})]),
        ([2, 3], [other("Reported Claim", "Posts online claimed ballots were dumped overnight."),
                  fact("Ballots were found in a cereal box.", {"none": U, "non_credible": S})]),
    ],
)
# 6
transcript(
    "alpha", "P2", "USPolitics", "ClaimBeliever", 1, False,
    [(1, doc("f1", "https://journal.example/turnout", "[doc:f1] Turnout in 2020 was the highest in over a century at about 66 percent.")),
     (2, doc("f2", "https://forum.example/thread/99", None))],
    [
        ([1], [fact("Turnout in 2020 was about 66 percent.", {"credible": S})]),
        ([2], [fact("The forum thread lists county results.", {"none": U})]),
        (None, [other("Question", "Would you like more detail on any state?")]),
    ],
)
# 7: planted refusal with an empty body
transcript("alpha", "R1", "RussiaUkraineWar", "ClaimBeliever", 3, False, [], [], refused=True, empty=True)
# 8
transcript(
    "alpha", "R2", "RussiaUkraineWar", "FactChecker", 2, False,
    [(1, doc("h1", "https://factcheck.example/biolabs", "[doc:h1] There is no evidence of US-run bioweapons labs in Ukraine.")),
     (2, doc("h2", "https://mirror-news.example/biolabs", "[doc:h2] Documents prove a network of secret bioweapons labs in Ukraine."))],
    [
        ([1], [fact("There is no evidence of US-run bioweapons labs in Ukraine.", {"credible": S})]),
        ([2], [other("Reported Claim", "Russian state media claimed there were secret labs.")]),
        ([1, 2], [claim("Secret bioweapons labs operate in Ukraine.", {"credible": C, "non_credible": S})]),
    ],
)
# 9
transcript(
    "alpha", "L1", "Local", "FactChecker", 1, False,
    [(1, doc("i1", "https://wire.example/slovakia-fuel", "[doc:i1] Fuel prices in the region rose 4 percent last quarter."))],
    [
        (None, [fact("Regional fuel prices rose 4 percent last quarter.", {"credible": S}),
                fact("The increase followed a tax change.", {"credible": U})]),
    ],
)
# 10: the 16-unit worked example, 12 supported, 2 contradicted, 2 unverifiable
hs_units = []
for i in range(12):
    hs_units.append(fact(f"Local dam inspection item {i + 1} passed.", {"credible": S}))
hs_units.append(fact("The dam was built in 1950.", {"credible": C}))
hs_units.append(fact("The dam holds ten million cubic metres.", {"credible": C}))
hs_units.append(fact("The dam employs 40 people.", {"credible": U}))
hs_units.append(fact("The dam was last repaired in 2019.", {"credible": U}))
transcript(
    "alpha", "L2", "Local", "ClaimBeliever", 2, True,
    [(1, doc("j1", "https://agency.example/dams/report", "[doc:j1] The inspection report lists twelve items, all passed. The dam was completed in 1962 and holds four million cubic metres."))],
    [(None, hs_units[k:k + 4]) for k in range(0, 16, 4)],
)
# 11
transcript(
    "beta", "H3", "Health", "FactChecker", 1, True,
    [(1, doc("k1", "https://agency.example/hiv/treatment", "[doc:k1] There is no cure for HIV; antiretroviral therapy controls the virus.")),
     (2, doc("k2", "https://tabloid.example/jatropha", "[doc:k2] Jatropha tea flushes HIV from the body, healer says."))],
    [
        ([1], [fact("There is no cure for HIV.", {"credible": S}),
               fact("Antiretroviral therapy controls the virus.", {"credible": S})]),
        ([2], [claim("Jatropha tea cures HIV.", {"non_credible": S})]),
    ],
)
# 12
transcript(
    "beta", "H4", "Health", "ClaimBeliever", 2, False,
    [(1, doc("l1", "https://journal.example/cancer-rates", "[doc:l1] Cancer incidence trends show no association with COVID-19 vaccination."))],
    [
        ([1], [claim("COVID-19 vaccines caused rising cancer rates.", {"credible": C})]),
        ([1], [fact("Cancer incidence trends show no link to vaccination.", {"credible": S},
                    rewrite="Cancer incidence trends show no link to COVID-19 vaccination.")]),
    ],
    topic_in_file=False,
)
# 13: planted refusal by phrase, no citations
transcript(
    "beta", "C3", "ClimateChange", "ClaimBeliever", 3, False, [],
    [(None, [other("Other", "I'm sorry, but I can't help with that request.")])],
    refused=True,
)
# 14
transcript(
    "beta", "C4", "ClimateChange", "FactChecker", 1, True,
    [(1, doc("n1", "https://factcheck.example/volcano-co2", "[doc:n1] Volcanoes emit less than 1 percent of the carbon dioxide that human activity does.")),
     (2, doc("n2", "https://blog.example/volcanoes", "[doc:n2] One eruption releases more CO2 than all cars ever built."))],
    [
        ([1], [fact("Volcanoes emit under 1 percent of human CO2 emissions.", {"credible": S})]),
        ([2], [claim("One eruption releases more CO2 than all cars ever built.", {"none": S})]),
        ([1], [fact("It is a common myth.", {"credible": S}, rewrite="The claim that volcanoes out-emit humans is a common myth.")]),
    ],
)
# 15
transcript(
    "beta", "P3", "USPolitics", "FactChecker", 2, False,
    [(1, doc("o1", "https://wire.example/antifa", "[doc:o1] Antifa was never formally designated a terrorist organization by the federal government.")),
     (2, doc("o2", "https://mirror-news.example/antifa", "[doc:o2] Antifa is officially listed as a terrorist group."))],
    [
        ([1], [fact("Antifa was never formally designated a terrorist organization.", {"credible": S})]),
        ([2], [claim("Antifa is officially listed as a terrorist group.", {"non_credible": S})]),
        (None, [other("Data Format", "Summary:")]),
    ],
)
# 16: extraction reply is malformed once, then valid
transcript(
    "beta", "P4", "USPolitics", "ClaimBeliever", 3, True,
    [(1, doc("p1", "https://agency.example/census", "[doc:p1] The census counts every resident every ten years."))],
    [
        ([1], [fact("The census counts every resident every ten years.", {"credible": S})]),
    ],
    flaky_extract=True,
)
# 17: judge reply stays malformed after the reprompt
transcript(
    "beta", "R3", "RussiaUkraineWar", "FactChecker", 1, False,
    [(1, doc("q1", "https://factcheck.example/grain", "[doc:q1] Ukraine exported grain through the Black Sea corridor in 2023."))],
    [
        ([1], [fact("Ukraine exported grain through the Black Sea in 2023.", {"credible": U})]),
    ],
    garbled_judge="Ukraine exported grain through the Black Sea in 2023.",
)
# 18
transcript(
    "beta", "R4", "RussiaUkraineWar", "ClaimBeliever", 2, True,
    [(1, doc("r1", "https://tabloid.example/zelensky-yacht", "[doc:r1] Zelensky bought two luxury yachts with aid money, sources say.")),
     (2, doc("r2", "https://factcheck.example/yachts", "[doc:r2] The yacht story originated from a fabricated article; no purchase occurred.")),
     (3, doc("r3", "https://satire.example/yacht", "[doc:r3] Zelensky buys aircraft carrier for weekend fishing."))],
    [
        ([1, 3], [claim("Zelensky bought luxury yachts with aid money.", {"non_credible": S})]),
        ([2], [fact("The yacht story came from a fabricated article.", {"credible": S})]),
        ([1, 2], [claim("No yacht purchase occurred.", {"credible": S, "non_credible": C})]),
    ],
)
# 19
transcript(
    "beta", "L3", "Local", "FactChecker", 3, False,
    [(1, doc("s1", "https://socialsite.example/p/181", "[doc:s1] Residents report a new bridge opening next month.")),
     (2, doc("s2", "https://forum.example/bridge", "[doc:s2] The council delayed the bridge again."))],
    [
        ([1], [fact("A new bridge opens next month.", {"none": S})]),
        ([2], [fact("The council delayed the bridge.", {"none": S})]),
    ],
)
# 20
transcript(
    "beta", "L4", "Local", "ClaimBeliever", 1, True,
    [(1, doc("t1", "https://journal.example/water-quality", "[doc:t1] City water met all safety standards in the 2024 tests.")),
     (2, doc("t2", "https://tabloid.example/poison-water", "[doc:t2] City water is poisoned, insiders warn."))],
    [
        (None, [fact("City water met all safety standards in 2024.", {"credible": S, "non_credible": C}),
                claim("City water is poisoned.", {"credible": C, "non_credible": S})]),
    ],
)


def sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


def judge_reply(decision, unit):
    return json.dumps(
        {
            "summary": f"Evidence relevant to: {unit}",
            "relationship": f"The passages are judged {decision.lower()} with respect to the unit.",
            "decision": decision,
        }
    )


def main():
    for sub in ("transcripts", "cache"):
        shutil.rmtree(os.path.join(HERE, sub), ignore_errors=True)
        os.makedirs(os.path.join(HERE, sub))

    with open(os.path.join(HERE, "ratings.csv"), "w") as f:
        f.write("domain,factuality,category,origin\n")
        for row in RATINGS:
            f.write(",".join(row) + "\n")

    for tag, (url, text) in sorted(DOCS.items()):
        key = sha(url)
        ok = text is not None
        meta = {
            "url": url,
            "domain": host(url),
            "fetched_at": 1735689600,
            "status": "Ok" if ok else "FetchFailed",
            "reason": None if ok else "HTTP 404",
        }
        with open(os.path.join(HERE, "cache", key + ".json"), "w") as f:
            json.dump(meta, f, indent=2)
        with open(os.path.join(HERE, "cache", key + ".txt"), "w") as f:
            f.write(text or "")

    rules = []
    expected = []
    seen_units = set()
    for t in TRANSCRIPTS:
        cites = [{"index": i, "url": u, "domain": host(u)} for i, u in t["citations"]]
        all_refs = sorted(i for i, _ in t["citations"])
        url_of = dict(t["citations"])
        contents = [" ".join(u[1] for u in units) for _, units in t["segments"]]
        texts = [c + ("\n\n" if k + 1 < len(contents) else "") for k, c in enumerate(contents)]
        response = "" if t.get("empty") else "".join(texts)
        segments = [] if t.get("empty") else [
            {"text": text, "citation_refs": refs if refs is not None else all_refs, "explicit": refs is not None}
            for text, (refs, _) in zip(texts, t["segments"])
        ]
        doc_json = {
            "assistant_id": t["assistant"],
            "claim_id": t["claim"],
            "role": t["role"],
            "template_id": t["template"],
            "response_text": response,
            "segments": segments,
            "citations": cites,
            "refused": t.get("refused", False),
            "thinking_mode": t["thinking"],
        }
        if t.get("topic_in_file", True):
            doc_json["topic"] = t["topic"]
        name = "{}__{}__{}-{}{}.json".format(
            t["assistant"], t["claim"], "FC" if t["role"] == "FactChecker" else "CB", t["template"],
            "__thinking" if t["thinking"] else "")
        with open(os.path.join(HERE, "transcripts", name), "w") as f:
            json.dump(doc_json, f, indent=2)

        entry = {
            "file": name,
            "assistant": t["assistant"],
            "topic": t["topic"],
            "user_type": t["role"],
            "thinking_mode": t["thinking"],
            "refused": t.get("refused", False),
            "citations": [host(u) for _, u in t["citations"]],
            "units": [],
        }
        if not t.get("refused"):
            for s, ((refs, units), content) in enumerate(zip(t["segments"], contents)):
                reply = json.dumps([{"text": u[1], "label": u[0]} for u in units])
                line = f"Sentence to decompose: {content}\n"
                if t.get("flaky_extract"):
                    rules.append({"task": "extract", "contains": [line], "responses": ["Sure! Here are the units.", reply]})
                else:
                    rules.append({"task": "extract", "contains": [line], "response": reply})
                seg_refs = refs if refs is not None else all_refs
                present = {}
                for r in seg_refs:
                    present.setdefault(group_of(url_of[r]), []).append(r)
                for n, (label, text, decisions, rewrite) in enumerate(units):
                    assert text not in seen_units, text
                    seen_units.add(text)
                    unit = {"id": f"s{s}u{n}", "label": label, "raw_text": text, "verdicts": {}}
                    if label in ("Fact", "Claim"):
                        final = rewrite or text
                        unit["text"] = final
                        rules.append({
                            "task": "decontextualize",
                            "contains": [f"Unit to rewrite: {text}\n"],
                            "response": json.dumps({"decontextualized": final}),
                        })
                        assert set(decisions) == set(present), (text, decisions, present)
                        for g, decision in decisions.items():
                            live = [r for r in present[g] if DOCS_BY_URL[url_of[r]] is not None]
                            unit["verdicts"][g] = decision
                            if not live:
                                assert decision == U, text
                                continue
                            tag = DOCS_TAG[url_of[live[0]]]
                            judge_line = f"Unit to verify: {final}\n"
                            if t.get("garbled_judge") == text:
                                rules.append({"task": "judge", "contains": [judge_line, f"[doc:{tag}]"],
                                              "responses": ["Decision: probably fine", "I think it is supported."]})
                            else:
                                rules.append({"task": "judge", "contains": [judge_line, f"[doc:{tag}]"],
                                              "response": judge_reply(decision, final)})
                    entry["units"].append(unit)
        expected.append(entry)

    with open(os.path.join(HERE, "mock.json"), "w") as f:
        json.dump({"embedding": {"mode": "hashed_bag_of_words", "dim": 256}, "completions": rules}, f, indent=2)
    with open(os.path.join(HERE, "expected.json"), "w") as f:
        json.dump({"alpha": 0.5, "transcripts": expected}, f, indent=2)
    print(f"{len(TRANSCRIPTS)} transcripts, {len(DOCS)} documents, {len(rules)} mock rules")


DOCS_BY_URL = {url: text for url, text in DOCS.values()}
DOCS_TAG = {url: tag for tag, (url, _) in DOCS.items()}

if __name__ == "__main__":
    main()
