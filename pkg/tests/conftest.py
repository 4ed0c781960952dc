import pytest

from helpers import build_db, entity, random_kg, reference, snak, statement
from wikilite.api import Database


@pytest.fixture(scope="session")
def kg_entities():
    return random_kg(1000, per_item=10, seed=42)


@pytest.fixture(scope="session")
def kg_path(tmp_path_factory, kg_entities):
    path, report = build_db(tmp_path_factory.mktemp("kg"), kg_entities)
    assert report.entities_ok == 1000
    return path


@pytest.fixture(scope="session")
def kg_db(kg_path):
    db = Database.open(kg_path)
    yield db
    db.close()


def small_entities():
    """Hand-built fixture: people, a class hierarchy, references, odd snaks."""
    return [
        entity("Q5", labels={"en": "human", "fr": "être humain"}, descriptions={"en": "species"},
               aliases={"en": ["person", "people"]}, sitelinks={"enwiki": "Human"},
               claims=[("P279", "Q215627")]),
        entity("Q42", labels={"en": "Douglas Adams", "de": "Douglas Adams"},
               descriptions={"en": "English writer"}, aliases={"en": ["Douglas Noël Adams", "DNA"]},
               sitelinks={"enwiki": "Douglas Adams", "frwiki": "Douglas Adams"},
               claims=[
                   statement(snak("P31", "Q5"), references=[reference(snak("P248", "Q36578")),
                                                            reference(snak("P143", "Q328"))]),
                   statement(snak("P31", snaktype="somevalue")),
                   statement(snak("P31", "Q5")),
                   statement(snak("P31", "Q1")),
                   ("P50", "Q1"),
                   statement(snak("P69", "Q691283"), rank="deprecated"),
                   statement(snak("P1477", datatype="string", datavalue={"type": "string", "value": "DNA"})),
                   statement(snak("P735", "Q463035"), qualifiers={"P1545": [snak(
                       "P1545", datatype="string", datavalue={"type": "string", "value": "1"})]}),
               ]),
        entity("Q1", "universe", [("P50", "Q42"), ("P279", "Q1")]),
        entity("Q215627", "person", [("P279", "Q5")]),
        entity("Q3", "somebody", [statement(snak("P31", snaktype="somevalue")), ("P31", "Q5")]),
        entity("Q4", "nothing here"),
        entity("P31", labels={"en": "instance of"}),
        {"id": "L7", "type": "lexeme"},
    ]


@pytest.fixture(scope="session")
def small_path(tmp_path_factory):
    path, _ = build_db(tmp_path_factory.mktemp("small"), small_entities())
    return path


@pytest.fixture(scope="session")
def small_db(small_path):
    db = Database.open(small_path)
    yield db
    db.close()


def people_entities():
    """Seven humans (three female), one cat and a few classes."""
    out = [
        entity("Q5", "human", [("P279", "Q215627")], descriptions={"en": "species"}),
        entity("Q215627", "person"),
        entity("Q146", "cat", descriptions={"en": "small furry animal"}),
        entity("Q6581097", "male"),
        entity("Q6581072", "female"),
    ]
    names = ["douglas adams", "ada lovelace", "alan turing", "grace hopper", "francis crick", "james watson",
             "rosalind franklin"]
    female = {"ada lovelace", "grace hopper", "rosalind franklin"}
    for i, name in enumerate(names):
        sex = "Q6581072" if name in female else "Q6581097"
        out.append(entity(f"Q{100 + i}", name, [("P31", "Q5"), ("P21", sex)], aliases={"en": [name.split()[-1]]}))
    out.append(entity("Q200", "tibbles", [("P31", "Q146"), ("P21", "Q6581072")]))
    return out


@pytest.fixture(scope="session")
def people_path(tmp_path_factory):
    path, _ = build_db(tmp_path_factory.mktemp("people"), people_entities())
    return path


@pytest.fixture(scope="session")
def people_db(people_path):
    db = Database.open(people_path)
    yield db
    db.close()
