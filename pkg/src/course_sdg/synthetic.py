"""Synthetic course catalog for offline end-to-end runs.

Every clean course is written around exactly three goals, using sentences
that contain terms from the keyword oracle table for those goals only, so the
oracle labels are known by construction. A handful of noise records (Finnish
text, wrong years, too-short texts, cross-year duplicates, missing fields) are
mixed in so that the cleaning stage has something to drop.
"""
from __future__ import annotations

import random

from .labelgen import KeywordOracle, VALID_GOALS
from .preprocess import render_combined_text

TOPICS = {
    1: ["Social Policy and Poverty", "Microfinance Basics", "Welfare Services"],
    2: ["Food Systems", "Sustainable Agriculture", "Nutrition Science"],
    3: ["Clinical Practice", "Public Health Nursing", "Basics of Medicine"],
    5: ["Gender Studies", "Women in Leadership", "Maternity Care Work"],
    6: ["Sanitation Engineering", "Wastewater Treatment", "Groundwater Hydrology"],
    7: ["Renewable Energy Systems", "Solar Power Design", "Electricity Markets"],
    8: ["Entrepreneurship", "Labour Economics", "Workplace Studies"],
    9: ["Industrial Automation", "Innovation Management", "Manufacturing Technology"],
    10: ["Accessibility in Design", "Migration and Society", "Inclusion in Practice"],
    11: ["Urban Planning Studio", "Housing Design", "Transport Systems"],
    12: ["Circular Economy", "Recycling Technology", "Packaging Design"],
    13: ["Climate Change Fundamentals", "Carbon Accounting", "Emissions Control"],
    14: ["Marine Biology", "Ocean Engineering", "Coastal Management"],
    15: ["Forest Ecology", "Biodiversity Monitoring", "Soil Science"],
    16: ["Business Law", "Governance and Ethics", "Legal Foundations"],
    17: ["International Project Work", "Partnerships in Development Projects", "Multilateral Collaboration"],
}

SENTENCES = {
    1: ["The course examines the causes of poverty and how welfare programmes respond to them.",
        "We study microfinance schemes that help households escape deprivation.",
        "Case studies cover homelessness services and the welfare state.",
        "Students analyse how poverty is measured in surveys."],
    2: ["The course covers food production chains from farm to table.",
        "Students learn how modern agriculture manages crops under changing seasons.",
        "Lectures discuss nutrition and the prevention of hunger.",
        "Practical sessions explore small scale farming and food security."],
    3: ["Students practise clinical skills in realistic care settings.",
        "The course introduces nursing care for patients with chronic disease.",
        "Lectures cover health promotion and the wellbeing of clients.",
        "We review evidence based medicine and safe care of patients."],
    5: ["The course discusses gender roles in the work of care.",
        "Students explore how women and girls are represented in media.",
        "We review feminist theory and gender equality policy.",
        "Lectures cover maternity services and support for women."],
    6: ["Students design sanitation systems for rural communities.",
        "The course covers wastewater treatment processes and hygiene.",
        "We study groundwater protection and safe drinking supply.",
        "Laboratory work measures the quality of drinking supplies and wastewater."],
    7: ["Students size solar panels and photovoltaic inverters.",
        "The course covers renewable energy sources and their integration.",
        "We model electricity networks and energy storage.",
        "Lectures compare renewable energy technologies in terms of cost."],
    8: ["The course introduces entrepreneurship and starting a small company.",
        "Students analyse employment trends and labour markets.",
        "We discuss economic growth and fair conditions in the workplace.",
        "Case studies cover workplace safety and employment contracts."],
    9: ["Students learn about industrial automation and robotics.",
        "The course covers innovation processes in industry.",
        "We study manufacturing systems and production lines.",
        "Lectures address infrastructure investment and industrial design."],
    10: ["The course examines discrimination and how to prevent it.",
         "Students learn principles of accessibility for digital services.",
         "We discuss migration and the inclusion of newcomers.",
         "Lectures analyse inequalities between social groups."],
    11: ["Students design urban spaces and housing for growing cities.",
         "The course covers transport planning in cities.",
         "We study municipal services and urban development.",
         "Project work addresses affordable housing and public transport."],
    12: ["The course introduces the circular economy and recycling.",
         "Students perform lifecycle assessment of consumer products.",
         "We study waste management and sustainable consumption.",
         "Lectures cover packaging design that reduces waste."],
    13: ["The course explains the science of climate change and global warming.",
         "Students calculate carbon footprints and emissions inventories.",
         "We study climate mitigation strategies for organisations.",
         "Lectures discuss carbon pricing and emissions trading."],
    14: ["Students study marine organisms and ocean ecology.",
         "The course covers fisheries management and coastal habitats.",
         "We examine water quality in aquatic environments.",
         "Field work takes place on the coastal shore and in marine laboratories."],
    15: ["Students survey biodiversity in forests and meadows.",
         "The course covers soil formation and land ecosystems.",
         "We study wildlife populations and habitat protection.",
         "Lectures discuss the management of forests and ecosystems."],
    16: ["The course introduces law and the legal system.",
         "Students analyse governance of public institutions.",
         "We discuss justice, human rights and the rule of law.",
         "Lectures cover legal responsibility and institutions of the state."],
    17: ["Students work in international teams on joint projects.",
         "The course covers partnerships between organisations and cooperation across borders.",
         "We study multilateral agreements and international collaboration.",
         "Project work emphasises collaboration and cooperation with partners."],
}

OBJECTIVES = {
    1: "can explain the main drivers of poverty",
    2: "can describe sustainable food and agriculture practices",
    3: "can apply clinical and nursing competence in the care of patients",
    5: "can analyse gender perspectives in their field",
    6: "can plan sanitation and wastewater solutions",
    7: "can evaluate renewable energy options",
    8: "can assess employment and entrepreneurship opportunities",
    9: "can contribute to innovation in industry",
    10: "can promote inclusion and accessibility",
    11: "can plan urban housing and transport solutions",
    12: "can apply circular economy and recycling principles",
    13: "can estimate carbon emissions and propose climate actions",
    14: "can describe marine and coastal habitats and water quality",
    15: "can assess biodiversity and soil conditions",
    16: "can interpret law and legal frameworks",
    17: "can work in international partnerships",
}

FILLER = [
    "The course combines lectures, group assignments and independent study.",
    "Assessment is based on a written exam and a project report.",
    "Students are expected to participate actively in seminars.",
    "The learning materials are available in the online learning environment.",
    "Guest speakers from companies and public organisations share their experience.",
    "The course is suitable for second year students of the programme.",
    "Weekly exercises help the student to reflect on their own progress.",
    "The final project is presented to the whole group at the end of the term.",
    "Feedback is given throughout the course to support learning.",
    "The student is able to communicate results clearly in writing and orally.",
    "Teamwork skills are developed through small group tasks.",
    "Attendance at the first lecture is required.",
]

DEGREES = {
    1: "Social Services", 2: "Biotechnology and Food Engineering", 3: "Nursing",
    5: "Social Services", 6: "Environmental Engineering", 7: "Energy and Environmental Engineering",
    8: "Business Administration", 9: "Information and Communication Technology",
    10: "Social Services", 11: "Civil Engineering", 12: "Environmental Engineering",
    13: "Energy and Environmental Engineering", 14: "Environmental Engineering",
    15: "Biotechnology and Food Engineering", 16: "Business Administration",
    17: "International Business",
}

FINNISH = [
    "Opiskelija osaa soveltaa teoriaa ja oppii keskeiset perusteet.",
    "Opintojakson tavoitteena on, että opiskelija tuntee alan keskeiset menetelmät ja osaa käyttää niitä.",
    "Kurssilla opiskelija oppii myös ryhmätyön taitoja sekä raportointia.",
    "Opiskelija ymmärtää, miten eri menetelmiä voidaan käyttää työssä.",
]


def _text_block(rng, goals, lo, hi):
    parts = []
    for g in goals:
        parts.extend(rng.sample(SENTENCES[g], 2))
    rng.shuffle(parts)
    text = " ".join(parts)
    fill = FILLER[:]
    rng.shuffle(fill)
    while len(text) < lo and fill:
        text += " " + fill.pop()
    return text[:hi].rsplit(" ", 1)[0] if len(text) > hi else text


def make_course(rng, cid, year, goals):
    name = rng.choice(TOPICS[goals[0]])
    description = _text_block(rng, goals, 380, 1000)
    objective = "The student " + ", ".join(OBJECTIVES[g] for g in goals) + "."
    return {
        "id": cid, "name": name, "description": description, "objective": objective,
        "year": year, "degree": DEGREES[goals[0]], "language": "en",
    }


def make_catalog(n_clean=500, seed=2024, noise=True):
    """Return raw catalog records; ``n_clean`` of them survive default cleaning."""
    rng = random.Random(seed)
    oracle = KeywordOracle()
    records = []
    seen_text = set()
    while len(records) < n_clean:
        goals = rng.sample(VALID_GOALS, 3)
        rec = make_course(rng, f"C{len(records) + 1:05d}", rng.choice((2021, 2022, 2023)), goals)
        text = render_combined_text(rec["name"], rec["description"], rec["objective"])
        n = len(rec["description"]) + len(rec["objective"])
        key = (rec["name"].lower(), rec["description"], rec["objective"])
        if oracle.goals_for(text) != sorted(goals) or not 500 <= n <= 2000 or key in seen_text:
            continue
        seen_text.add(key)
        records.append(rec)

    if noise:
        extra = []
        for i, src in enumerate(rng.sample(records, 10)):
            extra.append({**src, "id": f"D{i + 1:05d}", "year": 2020})  # out of range copy
        for i, src in enumerate(rng.sample(records, 10)):
            dup = {**src, "id": f"R{i + 1:05d}", "year": src["year"] - 1}
            if dup["year"] >= 2021:
                extra.append(dup)  # older cross-year duplicate, dropped by dedup
        for i in range(10):
            fin = " ".join(rng.sample(FINNISH, len(FINNISH)))
            extra.append({
                "id": f"F{i + 1:05d}", "name": "Ohjelmointi", "description": fin * 3,
                "objective": fin, "year": 2022, "degree": "Tietotekniikka", "language": "fi",
            })
        for i in range(5):
            extra.append({
                "id": f"S{i + 1:05d}", "name": "Short Course", "description": FILLER[i],
                "objective": FILLER[i + 1], "year": 2022, "degree": "Business Administration",
                "language": "en",
            })
        for i in range(5):
            extra.append({
                "id": f"M{i + 1:05d}", "name": "Untitled", "description": None,
                "objective": FILLER[i], "year": 2023, "degree": "Business Administration",
                "language": "en",
            })
        records = records + extra
    records.sort(key=lambda r: (r["year"], r["id"]))
    return records
