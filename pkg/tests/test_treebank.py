import pytest

from rstboost.errors import InvalidConfig, InvalidTree, MalformedSyntax
from rstboost.treebank import (
    EDU,
    Document,
    Internal,
    Leaf,
    SynthConfig,
    iter_internal,
    iter_leaves,
    load_treebank,
    parse_bracketed,
    save_treebank,
    serialize_bracketed,
    synthesize_treebank,
    validate,
    validate_treebank,
)

SHARED = ("attribution", "background", "cause", "contrast", "elaboration", "joint")
DOMAIN = ("condition", "evidence")


def synth_cfg(**kw):
    base = dict(
        n_docs=20,
        edu_range=(2, 8),
        shared_vocab=50,
        domain_vocab=20,
        domain_tag="news",
        shared_relations=SHARED,
        domain_relations=DOMAIN,
        p_domain=0.3,
        name="synth",
    )
    base.update(kw)
    return SynthConfig(**base)


class TestParseBracketed:
    def test_two_edu_tree(self):
        doc, tree = parse_bracketed('(NS elaboration (leaf "it rained") (leaf "so we left"))')
        assert doc.edus == (
            EDU(1, ("it", "rained")),
            EDU(2, ("so", "we", "left")),
        )
        assert tree == Internal("NS", "elaboration", Leaf(1), Leaf(2))

    def test_single_leaf(self):
        doc, tree = parse_bracketed('(leaf "hello world")')
        assert doc.n_edus == 1
        assert tree == Leaf(1)
        assert doc.edus[0].tokens == ("hello", "world")

    def test_non_binary_node_rejected(self):
        with pytest.raises(InvalidTree):
            parse_bracketed('(NS elaboration (leaf "a"))')
        with pytest.raises(InvalidTree):
            parse_bracketed('(NS rel (leaf "a") (leaf "b") (leaf "c"))')

    def test_unknown_nuclearity_rejected(self):
        with pytest.raises(InvalidTree):
            parse_bracketed('(XX elaboration (leaf "a") (leaf "b"))')

    def test_unbalanced_parens(self):
        with pytest.raises(MalformedSyntax):
            parse_bracketed('(NS elaboration (leaf "a") (leaf "b")')
        with pytest.raises(MalformedSyntax):
            parse_bracketed('(leaf "a")) ')

    def test_bad_relation_label(self):
        with pytest.raises(MalformedSyntax):
            parse_bracketed('(NS Elab! (leaf "a") (leaf "b"))')

    def test_empty_leaf_text(self):
        with pytest.raises(InvalidTree):
            parse_bracketed('(leaf "   ")')

    def test_tokens_lowercased(self):
        doc, _ = parse_bracketed('(leaf "Hello WORLD")')
        assert doc.edus[0].tokens == ("hello", "world")


class TestSerializeBracketed:
    def test_leaf_only(self):
        doc, tree = parse_bracketed('(leaf "hello world")')
        assert serialize_bracketed(doc, tree) == '(leaf "hello world")'

    def test_right_branching_nesting(self):
        text = '(NS rel (leaf "a") (NS rel (leaf "b") (leaf "c")))'
        doc, tree = parse_bracketed(text)
        assert serialize_bracketed(doc, tree) == text

    def test_quote_escaping_round_trip(self):
        doc = Document("d", (EDU(1, ('say_"hi"', "x\\y")),))
        tree = Leaf(1)
        text = serialize_bracketed(doc, tree)
        doc2, tree2 = parse_bracketed(text, doc_id="d")
        assert doc2 == doc and tree2 == tree

    def test_round_trip_on_generated_treebank(self):
        tb = synthesize_treebank(synth_cfg(n_docs=30), seed=5)
        for doc, tree in tb.entries:
            text = serialize_bracketed(doc, tree)
            doc2, tree2 = parse_bracketed(text, doc_id=doc.doc_id)
            assert doc2 == doc
            assert tree2 == tree


class TestValidate:
    def test_valid_tree(self):
        doc, tree = parse_bracketed('(NS elaboration (leaf "a") (leaf "b"))')
        assert validate(doc, tree) == []

    def test_leaf_order_violation(self):
        doc = Document("d", tuple(EDU(i, (f"t{i}",)) for i in (1, 2, 3)))
        tree = Internal("NS", "rel", Leaf(1), Internal("NS", "rel", Leaf(3), Leaf(2)))
        problems = validate(doc, tree)
        assert len(problems) == 1
        assert "order" in problems[0]

    def test_coverage_violation(self):
        doc = Document("d", tuple(EDU(i, (f"t{i}",)) for i in (1, 2, 3)))
        tree = Internal("NS", "rel", Leaf(1), Leaf(5))
        problems = validate(doc, tree)
        assert len(problems) == 1
        assert "outside" in problems[0] and "root.right" in problems[0]

    def test_unknown_relation_against_inventory(self):
        doc, tree = parse_bracketed('(NS mystery (leaf "a") (leaf "b"))')
        assert validate(doc, tree, relation_inventory=("elaboration",)) != []
        assert validate(doc, tree, relation_inventory=("mystery",)) == []

    def test_bad_nuclearity_named_with_path(self):
        doc = Document("d", (EDU(1, ("a",)), EDU(2, ("b",))))
        tree = Internal("XY", "rel", Leaf(1), Leaf(2))
        problems = validate(doc, tree)
        assert any("root:" in p and "XY" in p for p in problems)


class TestFileIO:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tb"
        path.write_text("")
        tb = load_treebank(path)
        assert len(tb) == 0
        assert tb.name == "empty"

    def test_single_record(self, tmp_path):
        path = tmp_path / "one.tb"
        path.write_text('#doc d1 news\n(NS elaboration (leaf "a") (leaf "b"))\n')
        tb = load_treebank(path)
        assert len(tb) == 1
        assert tb.domain_tag == "news"
        assert tb.relation_inventory == ("elaboration",)
        assert tb.entries[0][0].doc_id == "d1"

    def test_malformed_second_record_names_index(self, tmp_path):
        path = tmp_path / "bad.tb"
        path.write_text(
            '#doc d1 news\n(leaf "a")\n\n#doc d2 news\n(NS rel (leaf "b")\n'
        )
        with pytest.raises(MalformedSyntax, match="record 2"):
            load_treebank(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.tb"
        path.write_text('(leaf "a")\n')
        with pytest.raises(MalformedSyntax, match="record 1"):
            load_treebank(path)

    def test_declared_relations_union(self, tmp_path):
        path = tmp_path / "declared.tb"
        path.write_text(
            "#relations zebra apple\n\n"
            '#doc d1 news\n(NS elaboration (leaf "a") (leaf "b"))\n'
        )
        tb = load_treebank(path)
        assert tb.relation_inventory == ("apple", "elaboration", "zebra")

    def test_save_load_round_trip(self, tmp_path):
        tb = synthesize_treebank(synth_cfg(n_docs=12), seed=3)
        path = tmp_path / "rt.tb"
        save_treebank(tb, path)
        tb2 = load_treebank(path)
        assert tb2.entries == tb.entries
        assert tb2.relation_inventory == tb.relation_inventory
        assert tb2.domain_tag == tb.domain_tag

    def test_mixed_domain_tags(self, tmp_path):
        path = tmp_path / "mix.tb"
        path.write_text(
            '#doc d1 news\n(leaf "a")\n\n#doc d2 chat\n(leaf "b")\n'
        )
        assert load_treebank(path).domain_tag == "mixed"

    def test_multiline_tree_record(self, tmp_path):
        path = tmp_path / "multi.tb"
        path.write_text(
            '#doc d1 news\n(NS elaboration\n  (leaf "a")\n  (leaf "b"))\n'
        )
        tb = load_treebank(path)
        assert len(tb) == 1


class TestSynthesize:
    def test_deterministic(self):
        a = synthesize_treebank(synth_cfg(), seed=7)
        b = synthesize_treebank(synth_cfg(), seed=7)
        assert a == b

    def test_seed_changes_output(self):
        a = synthesize_treebank(synth_cfg(), seed=7)
        b = synthesize_treebank(synth_cfg(), seed=8)
        assert a != b

    def test_p_domain_zero_ignores_domain_tag(self):
        a = synthesize_treebank(synth_cfg(p_domain=0.0, domain_tag="news"), seed=4)
        b = synthesize_treebank(synth_cfg(p_domain=0.0, domain_tag="chat"), seed=4)
        assert a.entries == b.entries
        assert a.domain_tag == "news" and b.domain_tag == "chat"

    def test_generated_set_validates(self):
        # full-set validator sweep at the documented desk-scale size
        tb = synthesize_treebank(synth_cfg(n_docs=100, edu_range=(2, 12)), seed=11)
        assert validate_treebank(tb) == []

    def test_internal_node_count_identity(self):
        tb = synthesize_treebank(synth_cfg(n_docs=40), seed=2)
        for doc, tree in tb.entries:
            n_internal = sum(1 for _ in iter_internal(tree))
            assert n_internal == doc.n_edus - 1

    def test_leaves_cover_document(self):
        tb = synthesize_treebank(synth_cfg(n_docs=25), seed=9)
        for doc, tree in tb.entries:
            ids = [leaf.edu_id for leaf in iter_leaves(tree)]
            assert ids == list(range(1, doc.n_edus + 1))

    def test_relations_drawn_from_inventory(self):
        tb = synthesize_treebank(synth_cfg(n_docs=40, p_domain=0.5), seed=13)
        used = {n.relation for _, t in tb.entries for n in iter_internal(t)}
        assert used <= set(tb.relation_inventory)
        assert tb.relation_inventory == tuple(sorted(set(SHARED) | set(DOMAIN)))

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            synthesize_treebank(synth_cfg(shared_relations=()), seed=1)
        with pytest.raises(InvalidConfig):
            synthesize_treebank(synth_cfg(edu_range=(0, 4)), seed=1)
        with pytest.raises(InvalidConfig):
            synthesize_treebank(synth_cfg(edu_range=(5, 4)), seed=1)
        with pytest.raises(InvalidConfig):
            synthesize_treebank(synth_cfg(p_domain=1.5), seed=1)
        with pytest.raises(InvalidConfig):
            synthesize_treebank(synth_cfg(p_domain=0.5, domain_relations=()), seed=1)

    def test_single_edu_documents_allowed(self):
        tb = synthesize_treebank(synth_cfg(edu_range=(1, 1), n_docs=5), seed=6)
        for doc, tree in tb.entries:
            assert doc.n_edus == 1
            assert tree == Leaf(1)
