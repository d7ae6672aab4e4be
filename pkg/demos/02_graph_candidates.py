"""K-hop expansion and candidate selection on a small movie-ish graph.

Items live outside the graph and attach to entities through a link map;
candidate_items walks k hops out from the user's click history and keeps
only linked items, ordered by discovery hop.
"""

from kgrec.graph import build_graph, candidate_items, k_hop_sets

triples = [
    ("inception", "directed_by", "nolan"),
    ("interstellar", "directed_by", "nolan"),
    ("nolan", "directed", "tenet"),
    ("nolan", "directed", "memento"),
    ("inception", "stars", "dicaprio"),
    ("dicaprio", "starred_in", "the_departed"),
    ("the_departed", "directed_by", "scorsese"),
    ("scorsese", "directed", "casino"),
]

# item id -> entity token; people are entities but not recommendable
links = {0: "inception", 1: "interstellar", 2: "tenet",
         3: "memento", 4: "the_departed", 5: "casino"}

g = build_graph(triples, links)
print(f"graph: {g.n_entities} entities, {g.n_relations} relations, {g.n_triples} triples")

seed = g.item_to_entity[0]  # the user clicked "inception"
for hop, layer in enumerate(k_hop_sets(g, {seed}, 3), start=1):
    tokens = sorted(g.entity_tokens[e] for e in layer)
    print(f"hop {hop}: {tokens}")

cands = candidate_items(g, {seed}, k=3, max_size=10, exclude={0})
print("candidates (item, first hop):")
for item, hop in zip(cands.items, cands.hops):
    print(f"  item {item} ({g.entity_tokens[g.item_to_entity[item]]}) at hop {hop}")
