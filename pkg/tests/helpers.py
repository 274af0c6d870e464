"""Fixture builders and independent reference implementations used by the tests."""

import math
import random

from tool2agent import AgentRecord, Catalog, ToolRecord
from tool2agent.ranking import ScoredEntity


def small_catalog():
    agents = [
        AgentRecord("filesystem", "filesystem", "read and write files"),
        AgentRecord("weather", "weather", "weather reports and forecasts"),
    ]
    tools = [
        ToolRecord("read_file", "read_file", "reads a file", "filesystem"),
        ToolRecord("write_file", "write_file", "writes a file to disk", "filesystem"),
        ToolRecord("forecast", "get_forecast", "hourly forecast for a city", "weather"),
    ]
    return Catalog.from_records(agents, tools)


def random_catalog(rng: random.Random, max_agents=20, max_tools=100, ownerless=0.1):
    n_agents = rng.randint(1, max_agents)
    n_tools = rng.randint(0, max_tools)
    agents = [AgentRecord(f"a{i}", f"agent {i}", f"agent number {i}") for i in range(n_agents)]
    tools = []
    for j in range(n_tools):
        owner = None if rng.random() < ownerless else f"a{rng.randrange(n_agents)}"
        tools.append(ToolRecord(f"t{j}", f"tool {j}", f"tool number {j}", owner))
    return Catalog.from_records(agents, tools)


def random_ranked(rng: random.Random, catalog: Catalog, length=None):
    """A random ranked list over the catalog (distinct entities, descending scores)."""
    pool = [("agent", a.agent_id) for a in catalog.agents] + [("tool", t.tool_id) for t in catalog.tools]
    rng.shuffle(pool)
    if length is None:
        length = rng.randint(0, len(pool))
    pool = pool[:length]
    return [ScoredEntity(eid, kind, float(len(pool) - i), i) for i, (kind, eid) in enumerate(pool)]


def reference_select(ranked, catalog, K):
    """Line-by-line transcription of the top-K agent selection loop."""
    L = list(ranked)
    N = len(L)
    A = []
    i = 1
    while len(A) < K and i <= N:
        e = L[i - 1]
        if e.kind == "agent":
            a = e.entity_id
        elif e.kind == "tool" and catalog.owner_map.get(e.entity_id) is not None:
            a = catalog.owner_map[e.entity_id]
        else:
            i = i + 1
            continue
        if a not in A:
            A = A + [a]
        i = i + 1
    return A, len(A) < K


def ref_recall(retrieved, relevant, k):
    return len(set(retrieved[:k]) & set(relevant)) / len(set(relevant))


def ref_ap(retrieved, relevant, k):
    rel = set(relevant)
    precisions = []
    for i in range(1, min(k, len(retrieved)) + 1):
        if retrieved[i - 1] in rel:
            precisions.append(sum(1 for r in retrieved[:i] if r in rel) / i)
    return sum(precisions) / min(k, len(rel))


def ref_ndcg(retrieved, relevant, k):
    rel = set(relevant)
    gains = [1.0 if r in rel else 0.0 for r in retrieved[:k]]
    dcg = sum(g / math.log2(i + 2) for i, g in enumerate(gains))
    ideal = [1.0] * min(k, len(rel))
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    return dcg / idcg


# --- context-dilution fixture ----------------------------------------------
# Agent descriptions are generic; the words that identify a step live only in
# tool descriptions.

GENERIC_AGENT_DESCRIPTIONS = [
    "provides assorted capabilities",
    "a general purpose server with many handy functions",
    "utility collection for miscellaneous jobs",
    "offers various helpful operations",
]

DOMAINS = [
    ("meteo", [
        ("hourly_forecast", "hourly temperature and precipitation forecast for any city"),
        ("storm_alerts", "severe thunderstorm and hurricane warnings"),
        ("air_quality", "pollution index and pollen levels outdoors"),
    ]),
    ("fx", [
        ("convert_currency", "convert dollars into euros or yen at exchange rates"),
        ("crypto_ticker", "bitcoin and ethereum spot price ticker"),
        ("inflation_series", "historical consumer price inflation series"),
    ]),
    ("calendar", [
        ("create_event", "schedule a meeting invitation on the agenda"),
        ("list_holidays", "public holidays per country and year"),
        ("timezone_shift", "translate clock times between timezones"),
    ]),
    ("maps", [
        ("driving_directions", "turn by turn driving directions and route distance"),
        ("geocode_address", "latitude longitude coordinates of a street address"),
        ("nearby_restaurants", "restaurants cafes near a location with ratings"),
    ]),
    ("git", [
        ("open_pull_request", "open a pull request against a repository branch"),
        ("commit_history", "show commit log and blame for source code"),
        ("merge_conflicts", "resolve merge conflicts during rebase"),
    ]),
    ("mail", [
        ("send_email", "compose and send an email message with attachments"),
        ("search_inbox", "search inbox threads by sender or subject"),
        ("unsubscribe", "unsubscribe from newsletter mailing lists"),
    ]),
    ("sheets", [
        ("pivot_table", "build a pivot table from spreadsheet rows"),
        ("cell_formula", "evaluate spreadsheet cell formulas like vlookup"),
        ("chart_export", "export a bar chart image from columns"),
    ]),
    ("pdf", [
        ("extract_text", "extract text from scanned pdf pages with ocr"),
        ("merge_pdfs", "merge several pdf documents into one"),
        ("fill_form", "fill pdf form fields and sign"),
    ]),
    ("music", [
        ("play_song", "play a song track or album playlist"),
        ("lyrics_lookup", "find lyrics for a song title"),
        ("concert_dates", "upcoming concert tour dates for a band"),
    ]),
    ("recipes", [
        ("find_recipe", "find cooking recipes by ingredient"),
        ("nutrition_facts", "calories protein carbohydrates nutrition facts"),
        ("meal_plan", "weekly vegetarian meal plan with grocery list"),
    ]),
    ("flights", [
        ("search_flights", "search airline flights between airports by date"),
        ("seat_map", "aircraft seat map and boarding pass"),
        ("baggage_rules", "checked baggage allowance and fees"),
    ]),
    ("stocks", [
        ("quote_equity", "equity stock quote for a ticker symbol on nasdaq"),
        ("earnings_calendar", "quarterly earnings report announcements"),
        ("dividend_yield", "dividend yield and payout ratio"),
    ]),
    ("translate", [
        ("translate_text", "translate sentences from spanish to german"),
        ("detect_language", "detect which language a paragraph is written in"),
        ("transliterate", "transliterate cyrillic script into latin letters"),
    ]),
    ("sql", [
        ("run_query", "execute a sql select statement against postgres tables"),
        ("describe_schema", "describe database schema columns and indexes"),
        ("explain_plan", "explain query execution plan and slow joins"),
    ]),
    ("docker", [
        ("list_containers", "list running docker containers and images"),
        ("container_logs", "tail container logs from kubernetes pods"),
        ("build_image", "build a dockerfile into an image"),
    ]),
    ("news", [
        ("top_headlines", "top breaking news headlines today"),
        ("article_summary", "summarize a newspaper article url"),
        ("press_releases", "corporate press releases archive"),
    ]),
    ("shopping", [
        ("price_compare", "compare product prices across online retailers"),
        ("track_package", "track parcel shipment delivery status"),
        ("coupon_codes", "discount coupon codes for checkout"),
    ]),
    ("health", [
        ("symptom_checker", "symptom checker for fever cough headache"),
        ("drug_interactions", "medication drug interactions and dosage"),
        ("step_counter", "daily step count and heart rate from a fitness tracker"),
    ]),
    ("images", [
        ("resize_photo", "resize crop and rotate a jpeg photo"),
        ("remove_background", "remove the background from a portrait picture"),
        ("describe_image", "caption and tag objects detected in a picture"),
    ]),
    ("travel", [
        ("hotel_booking", "book hotel rooms with check in and check out dates"),
        ("visa_requirements", "passport visa requirements for entry"),
        ("car_rental", "rent a car at the destination"),
    ]),
]

# one step per tool; the step paraphrases the tool with its distinctive words
DILUTION_STEPS = {
    "hourly_forecast": "what is the precipitation forecast this afternoon",
    "storm_alerts": "are there hurricane warnings near the coast",
    "air_quality": "check the pollen levels outdoors",
    "convert_currency": "convert 200 dollars to euros",
    "crypto_ticker": "current bitcoin price",
    "inflation_series": "show inflation since 2010",
    "create_event": "schedule a meeting next tuesday",
    "list_holidays": "which public holidays fall in may",
    "timezone_shift": "what time is 9am tokyo in other timezones",
    "driving_directions": "driving directions to the airport",
    "geocode_address": "latitude and longitude of this street address",
    "nearby_restaurants": "restaurants near me with good ratings",
    "open_pull_request": "open a pull request for this branch",
    "commit_history": "who wrote this code according to the commit log",
    "merge_conflicts": "fix merge conflicts after the rebase",
    "send_email": "send an email with the report attached",
    "search_inbox": "find the thread from my landlord in the inbox",
    "unsubscribe": "unsubscribe me from that newsletter",
    "pivot_table": "make a pivot table of sales by region",
    "cell_formula": "why does my vlookup formula fail",
    "chart_export": "export a bar chart of the columns",
    "extract_text": "ocr the scanned pages",
    "merge_pdfs": "merge these two pdf documents",
    "fill_form": "fill in the pdf form fields",
    "play_song": "play my workout playlist",
    "lyrics_lookup": "lyrics of that song",
    "concert_dates": "tour dates for the band this summer",
    "find_recipe": "recipes that use chickpeas as ingredient",
    "nutrition_facts": "how many calories and protein in oats",
    "meal_plan": "plan vegetarian meals and a grocery list",
    "search_flights": "flights from boston to denver on friday",
    "seat_map": "pick a window seat on the aircraft",
    "baggage_rules": "what are the checked baggage fees",
    "quote_equity": "stock quote for the nasdaq ticker",
    "earnings_calendar": "when is the quarterly earnings announcement",
    "dividend_yield": "dividend yield of this company",
    "translate_text": "translate this from spanish into german",
    "detect_language": "which language is this paragraph written in",
    "transliterate": "transliterate the cyrillic name",
    "run_query": "execute a sql select on the postgres orders table",
    "describe_schema": "describe the database schema",
    "explain_plan": "why is this join slow explain the execution plan",
    "list_containers": "list running docker containers",
    "container_logs": "tail logs from the kubernetes pods",
    "build_image": "build the dockerfile",
    "top_headlines": "breaking news headlines",
    "article_summary": "summarize this newspaper article",
    "press_releases": "latest corporate press releases",
    "price_compare": "compare prices of this product at retailers",
    "track_package": "track my parcel delivery",
    "coupon_codes": "any discount coupon for checkout",
    "symptom_checker": "i have a fever and a cough",
    "drug_interactions": "drug interactions for ibuprofen dosage",
    "step_counter": "my step count and heart rate today",
    "resize_photo": "resize and crop this jpeg",
    "remove_background": "remove the background from my portrait",
    "describe_image": "caption the objects detected in this picture",
    "hotel_booking": "book a hotel check in on monday",
    "visa_requirements": "do i need a visa with my passport",
    "car_rental": "rent a car at the destination",
}


def dilution_catalog():
    agents, tools = [], []
    for i, (domain, domain_tools) in enumerate(DOMAINS):
        agent_id = f"srv{i:02d}"
        agents.append(AgentRecord(agent_id, agent_id, GENERIC_AGENT_DESCRIPTIONS[i % 4], {"domain": domain}))
        for name, desc in domain_tools:
            tools.append(ToolRecord(name, name, desc, agent_id))
    return Catalog.from_records(agents, tools)


def dilution_benchmark_list():
    owner = {}
    for i, (_, domain_tools) in enumerate(DOMAINS):
        for name, _ in domain_tools:
            owner[name] = f"srv{i:02d}"
    out = []
    for i, (_, domain_tools) in enumerate(DOMAINS):
        steps = []
        for j, (name, _) in enumerate(domain_tools, start=1):
            steps.append({"index": j, "text": DILUTION_STEPS[name],
                          "relevant_agents": [owner[name]], "relevant_tools": [name]})
        out.append({"id": f"q{i:02d}", "question": " then ".join(s["text"] for s in steps), "steps": steps})
    return out


def scale_catalog(n_agents=70, n_tools=527, seed=0):
    """Synthetic catalog with the LiveMCPBench entity counts (70 agents, 527 tools)."""
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(2000)]
    agents = [AgentRecord(f"server{i}", f"server{i}", " ".join(rng.choices(words, k=12))) for i in range(n_agents)]
    tools = [
        ToolRecord(f"server{j % n_agents}::tool{j}", f"tool{j}", " ".join(rng.choices(words, k=20)),
                   f"server{j % n_agents}")
        for j in range(n_tools)
    ]
    return Catalog.from_records(agents, tools)
