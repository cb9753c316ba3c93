import os

import pytest

from rstparse.cli import (
    ConfigError,
    build_parser,
    build_train_config,
    main,
    parse_config_file,
)
from rstparse.core import RelationVocab
from rstparse.data import generate_synthetic, save_corpus

VOCAB = RelationVocab(["Cause", "Elaboration", "Joint"])


@pytest.fixture
def corpus_dir(tmp_path):
    corpus = generate_synthetic(3, 5, VOCAB, seed=31)
    path = tmp_path / "corpus"
    save_corpus(corpus, str(path))
    return str(path)


@pytest.fixture
def tiny_settings(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(
        "# small everything, for smoke runs\n"
        "max_epochs = 2\n"
        "hidden = 2\n"
        "ff_hidden = 2\n"
        "word_dim = 2\n"
        "pos_dim = 2\n"
        "dropout = 0.0\n"
        "lr = 0.01\n"
        "seed = 7\n")
    return str(path)


class TestConfigFile:
    def test_parse_values_comments_blanks(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("lr = 0.5  # step size\n\nmode = joint\ngrad_clip = none\n"
                     "dev_size = 2\n")
        values = parse_config_file(str(p))
        assert values == {"lr": 0.5, "mode": "joint", "grad_clip": None,
                          "dev_size": 2}

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("learning_rate = 0.5\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_file(str(p))

    def test_bad_value_and_syntax(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("lr = fast\n")
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_file(str(p))
        p.write_text("just some words\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_file(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config_file(str(tmp_path / "nope.cfg"))


class TestPrecedence:
    def test_flags_override_file_overrides_defaults(self, tmp_path):
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("lr = 0.5\nseed = 3\nhidden = 8\n")
        parser = build_parser()
        args = parser.parse_args(
            ["train", "--corpus", "x", "--out", "y",
             "--config", str(cfgfile), "--seed", "11"])
        cfg, dev_size = build_train_config(args)
        assert cfg.lr == 0.5          # from the file
        assert cfg.seed == 11         # flag wins
        assert cfg.hidden == 8        # from the file
        assert cfg.max_epochs == 15   # untouched default
        assert dev_size == 0

    def test_invalid_combination_is_a_config_error(self, tmp_path):
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("dropout = 1.5\n")
        parser = build_parser()
        args = parser.parse_args(["train", "--corpus", "x", "--out", "y",
                                  "--config", str(cfgfile)])
        with pytest.raises(ConfigError):
            build_train_config(args)


class TestTrainCommand:
    def test_end_to_end(self, corpus_dir, tiny_settings, tmp_path, capsys):
        model = str(tmp_path / "model.npz")
        code = main(["train", "--corpus", corpus_dir, "--out", model,
                     "--config", tiny_settings])
        out = capsys.readouterr().out
        assert code == 0
        assert os.path.exists(model)
        report = model + ".report.tsv"
        assert os.path.exists(report)
        with open(report) as fh:
            lines = fh.read().strip().split("\n")
        assert lines[0].startswith("epoch\ttrain_loss")
        assert len(lines) == 3  # header + 2 epochs
        assert "best epoch" in out

    def test_identical_runs_byte_identical_reports(self, corpus_dir,
                                                   tiny_settings, tmp_path):
        reports = []
        for tag in ("a", "b"):
            model = str(tmp_path / f"m{tag}.npz")
            assert main(["train", "--corpus", corpus_dir, "--out", model,
                         "--config", tiny_settings]) == 0
            with open(model + ".report.tsv", "rb") as fh:
                reports.append(fh.read())
        assert reports[0] == reports[1]

    def test_unknown_config_key_exit_code(self, corpus_dir, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("momentum = 0.9\n")
        code = main(["train", "--corpus", corpus_dir,
                     "--out", str(tmp_path / "m.npz"), "--config", str(bad)])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_corpus_exit_code(self, tmp_path, capsys):
        code = main(["train", "--corpus", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "m.npz")])
        assert code == 1
        assert "data error" in capsys.readouterr().err

    def test_dev_size_too_large(self, corpus_dir, tiny_settings, tmp_path,
                                capsys):
        code = main(["train", "--corpus", corpus_dir,
                     "--out", str(tmp_path / "m.npz"),
                     "--config", tiny_settings, "--dev-size", "3"])
        assert code == 2


class TestPipeline:
    @pytest.fixture
    def trained_model(self, corpus_dir, tiny_settings, tmp_path):
        model = str(tmp_path / "model.npz")
        assert main(["train", "--corpus", corpus_dir, "--out", model,
                     "--config", tiny_settings]) == 0
        return model

    def test_parse_eval_round_trip(self, corpus_dir, trained_model, tmp_path,
                                   capsys):
        pred_dir = str(tmp_path / "pred")
        edus = sorted(
            os.path.join(corpus_dir, f) for f in os.listdir(corpus_dir)
            if f.endswith(".edus"))
        assert main(["parse", "--model", trained_model, "--out-dir", pred_dir,
                     "--decoder", "exact"] + edus) == 0
        written = sorted(os.listdir(pred_dir))
        assert len(written) == 3
        assert all(name.endswith(".tree") for name in written)

        capsys.readouterr()
        tsv = str(tmp_path / "scores.tsv")
        code = main(["eval", "--gold", corpus_dir, "--pred", pred_dir,
                     "--tsv", tsv, "--per-doc"])
        out = capsys.readouterr().out
        assert code == 0
        assert "Span" in out and "Relation" in out
        with open(tsv) as fh:
            rows = fh.read().strip().split("\n")
        assert any(r.startswith("<micro>") for r in rows)

    def test_eval_missing_prediction_fails(self, corpus_dir, trained_model,
                                           tmp_path, capsys):
        pred_dir = str(tmp_path / "pred")
        edus = sorted(
            os.path.join(corpus_dir, f) for f in os.listdir(corpus_dir)
            if f.endswith(".edus"))
        assert main(["parse", "--model", trained_model, "--out-dir", pred_dir]
                    + edus) == 0
        removed = sorted(os.listdir(pred_dir))[0]
        os.unlink(os.path.join(pred_dir, removed))
        code = main(["eval", "--gold", corpus_dir, "--pred", pred_dir])
        err = capsys.readouterr().err
        assert code == 1
        assert removed[:-len(".tree")] in err

    def test_compare_lists_all_methods(self, corpus_dir, trained_model,
                                       capsys):
        code = main(["compare", "--model", trained_model,
                     "--corpus", corpus_dir])
        out = capsys.readouterr().out
        assert code == 0
        for m in ("exact", "partial", "complete", "transition"):
            assert m in out
        assert "gold" in out


class TestOracleCommand:
    def test_replay_round_trip(self, corpus_dir, capsys):
        trees = sorted(f for f in os.listdir(corpus_dir)
                       if f.endswith(".tree"))
        manifest = os.path.join(corpus_dir, "relations.txt")
        code = main(["oracle", os.path.join(corpus_dir, trees[0]),
                     "--manifest", manifest, "--replay"])
        captured = capsys.readouterr()
        assert code == 0
        assert captured.out.startswith("SHIFT")
        assert "round trip ok" in captured.err


class TestArgparseBehavior:
    def test_usage_error_exit_code(self):
        assert main(["train"]) == 2      # missing required flags
        assert main([]) == 2             # missing subcommand

    def test_bad_choice_exit_code(self, tmp_path):
        code = main(["parse", "--model", "m", "--decoder", "beam",
                     "--out-dir", str(tmp_path), "x.edus"])
        assert code == 2
