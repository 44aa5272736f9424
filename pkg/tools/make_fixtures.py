"""Regenerate the bundled Diplomacy walkthrough fixtures.

    python tools/make_fixtures.py

Writes src/skillcoevo/fixtures/diplomacy_episode.jsonl (a 20-step recorded
Austria episode) and diplomacy_bank.json (the EXPLORE / SETUP / DEFEND bank
it is segmented against).
"""

from pathlib import Path

from skillcoevo.bank import Bank, EffectContract, Skill, SkillInstance, SkillProtocol, save_bank
from skillcoevo.envs import TextAction
from skillcoevo.trajectory import EpisodeBuffer, Experience, State, save_trajectories

OUT = Path(__file__).resolve().parents[1] / "src" / "skillcoevo" / "fixtures"

START = {"sc_ge_3", "home_secure", "unk_intent(IT)", "unk_intent(RU)", "unk_intent(TR)",
         "game_start"}

# (added, deleted) predicates on arrival at step t, for t = 1..20
CHANGES = {
    1: ({"italy_in_VEN"}, set()),
    2: ({"border_info(IT)"}, {"unk_intent(IT)"}),
    3: ({"border_info(RU)"}, set()),
    4: ({"russia_in_GAL"}, set()),
    5: ({"galicia_held", "serbia_open", "gal_status_known"},
        {"unk_intent(RU)", "game_start", "italy_in_VEN"}),
    6: ({"sc_ge_4"}, set()),
    7: ({"turkey_passive", "serbia_held"}, set()),
    8: ({"greece_open", "italy_allied"}, set()),
    9: ({"sc_ge_5"}, set()),
    10: ({"turkey_attacks_BUL"}, {"serbia_open", "greece_open", "turkey_passive"}),
    11: ({"bulgaria_held"}, set()),
    12: ({"east_front_stable"}, set()),
    13: (set(), {"russia_in_GAL"}),
    14: (set(), set()),
    15: ({"turkey_contained"}, set()),
    16: (set(), set()),
    17: ({"italy_talks", "peace_offer_IT", "dmz_TYR"}, {"turkey_attacks_BUL"}),
    18: ({"alliance_IT"}, set()),
    19: ({"lepanto_planned"}, set()),
    20: ({"italy_trusts_AUS"}, set()),
}

STEPS = [
    # (order, intention, reward)
    ("A BUD-TRI", "scout Italian border", 0),
    ("F TRI-ALB", "secure Adriatic", 0),
    ("A VIE-TYR", "secure Adriatic", 0),
    ("F ALB H", "secure the Adriatic", 0),
    ("A VIE-GAL", "block Russia", 0),
    ("A BUD-SER", "take Serbia", 1),
    ("F ALB-GRE", "push south", 1),
    ("A SER H", "push south", 1),
    ("A GAL H", "push south", 1),
    ("F GRE-ION", "enter Mediterranean", 1),
    ("A BUL S A SER", "hold Bulgaria", 0),
    ("A SER S A BUL", "consolidate east", 0),
    ("A GAL-UKR", "consolidate east", 0),
    ("A UKR H", "consolidate east", 0),
    ("A BUL H", "consolidate east", 0),
    ("F ION H", "consolidate east", 0),
    ("A TYR H", "consolidate east", 0),
    ("PRESS ITA: propose DMZ TYR", "negotiate with Italy", 0),
    ("PRESS ITA: propose Lepanto", "negotiate with Italy", 0),
    ("PRESS ITA: confirm alliance", "negotiate with Italy", 0),
]


def states() -> list[State]:
    preds = set(START)
    score = 0.0
    out = []
    for t in range(len(STEPS) + 1):
        if t:
            added, deleted = CHANGES[t]
            preds = (preds | added) - deleted
            score += STEPS[t - 1][2]
        ordered = sorted(preds)
        summary = f"Diplomacy (Austria), step {t}: " + ", ".join(ordered)
        out.append(State(t, frozenset(preds), summary, {"predicates": ordered}, score))
    return out


def build_trajectory():
    ss = states()
    buf = EpisodeBuffer("diplomacy-austria-demo", "diplomacy", seed=0, iteration=0)
    for t, (order, intention, reward) in enumerate(STEPS):
        buf.append(Experience(ss[t], TextAction(order), float(reward), ss[t + 1],
                              t == len(STEPS) - 1, intention))
    return buf.finalize()


def _instances(n: int, add, delete, prefix: str):
    end = frozenset(add)
    return [SkillInstance(f"{prefix}-{i:02d}", 0, 5, frozenset(add), frozenset(delete), 0.0, 0,
                          frozenset(delete), end) for i in range(n)]


def build_bank() -> Bank:
    bank = Bank()
    explore_add = {"border_info(IT)", "border_info(RU)", "gal_status_known"}
    explore_del = {"unk_intent(IT)", "unk_intent(RU)"}
    setup_add = {"sc_ge_4", "sc_ge_5", "serbia_held", "italy_allied"}
    setup_del = {"serbia_open"}
    defend_add = {"bulgaria_held", "east_front_stable", "turkey_contained"}
    defend_del = {"turkey_attacks_BUL", "russia_in_GAL"}
    specs = [
        ("EXPLORE", "explore",
         SkillProtocol("Scout borders, probe neighbor intentions", {"game_start"},
                       ("Observe", "Assess", "Commit"),
                       {"border_info(IT)", "border_info(RU)", "gal_status_known"},
                       {"home_centers_attacked"}),
         explore_add, explore_del, 28, 2),
        ("SETUP", "expand",
         SkillProtocol("Set up a Balkan push toward Serbia and Greece", {"serbia_open"},
                       ("Take Serbia", "Push south", "Secure supply centers"),
                       {"sc_ge_5"}, {"home_centers_attacked"}),
         setup_add, setup_del, 20, 3),
        ("DEFEND", "defend",
         SkillProtocol("Defend the eastern front against a Turkish attack",
                       {"turkey_attacks_BUL"},
                       ("Support holds", "Consolidate east", "Contain Turkey"),
                       {"east_front_stable"}, {"home_centers_attacked"}),
         defend_add, defend_del, 15, 2),
    ]
    for sid, cat, proto, add, delete, n, version in specs:
        contract = EffectContract(frozenset(add), frozenset(delete), version=version,
                                  pass_rate=0.93, support=n)
        bank.upsert(Skill(sid, cat, proto, contract, _instances(n, add, delete, sid.lower())),
                    insert=True)
    return bank


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    save_trajectories(OUT / "diplomacy_episode.jsonl", [build_trajectory()])
    save_bank(OUT / "diplomacy_bank.json", build_bank())


if __name__ == "__main__":
    main()
