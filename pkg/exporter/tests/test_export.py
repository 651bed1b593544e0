"""Exporter tests: folder walking, error handling, format round-trip.

The round-trip tests load the exported directory with the consumer
package (``xmod_align``), which is the cross-boundary contract the
exporter exists to satisfy.
"""

import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from xmod_export import (
    DEFAULT_TEMPLATE,
    EmptyClassFolderError,
    ExportJob,
    ModelLoadError,
    OfflineHashEncoder,
    TemplateError,
    build_encoder,
    export,
)
from xmod_export.cli import main as cli_main

from xmod_align.data_io import load_dataset


def make_image_root(root: Path, classes=("cat", "dog"), per_class=3) -> Path:
    rng = np.random.default_rng(7)
    for name in classes:
        folder = root / name
        folder.mkdir(parents=True)
        for i in range(per_class):
            pixels = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(folder / f"img_{i}.png")
    return root


@pytest.fixture
def image_root(tmp_path):
    return make_image_root(tmp_path / "images")


class TestJobValidation:
    def test_default_template_has_one_placeholder(self):
        assert DEFAULT_TEMPLATE.count("{}") == 1

    @pytest.mark.parametrize("template", ["a photo", "{} and {}", "{0}"])
    def test_bad_template_rejected(self, tmp_path, template):
        with pytest.raises(TemplateError):
            ExportJob("offline-8", tmp_path, tmp_path / "out", template=template)

    def test_bad_batch_size(self, tmp_path):
        with pytest.raises(ValueError):
            ExportJob("offline-8", tmp_path, tmp_path / "out", batch_size=0)


class TestEncoders:
    def test_offline_tag_parsing(self):
        enc = build_encoder("offline-16")
        assert isinstance(enc, OfflineHashEncoder)
        assert enc.dim == 16

    def test_malformed_offline_tag(self):
        with pytest.raises(ModelLoadError):
            build_encoder("offline-sixteen")

    def test_unloadable_checkpoint(self):
        with pytest.raises(ModelLoadError):
            build_encoder("no-such-org/no-such-checkpoint-xyz")

    def test_offline_rows_unit_and_deterministic(self):
        enc = OfflineHashEncoder(12)
        rows_a = enc.encode_texts(["alpha", "beta"])
        rows_b = enc.encode_texts(["alpha", "beta"])
        np.testing.assert_array_equal(rows_a, rows_b)
        np.testing.assert_allclose(
            np.linalg.norm(rows_a, axis=1), 1.0, atol=1e-12
        )
        assert not np.allclose(rows_a[0], rows_a[1])


class TestExport:
    def test_round_trip_counts(self, image_root, tmp_path):
        out = tmp_path / "out"
        export(ExportJob("offline-16", image_root, out))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ds = load_dataset(out)
        assert ds.count == 6
        assert ds.num_classes == 2
        assert ds.class_names == ["cat", "dog"]  # sorted subfolder names
        assert ds.dim == 16
        np.testing.assert_array_equal(ds.labels, [0, 0, 0, 1, 1, 1])

    def test_rows_unit_after_quantization(self, image_root, tmp_path):
        out = tmp_path / "out"
        export(ExportJob("offline-16", image_root, out))
        raw = np.frombuffer(
            (out / "features.bin").read_bytes(), dtype="<f4"
        ).reshape(6, 16)
        np.testing.assert_allclose(
            np.linalg.norm(raw.astype(np.float64), axis=1), 1.0, atol=1e-4
        )

    def test_deterministic_bytes(self, image_root, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        export(ExportJob("offline-16", image_root, out_a))
        export(ExportJob("offline-16", image_root, out_b))
        for name in ("manifest", "features.bin", "labels.bin",
                     "text_features.bin"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_template_reaches_text_encoder(self, image_root, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        export(ExportJob("offline-16", image_root, out_a))
        export(ExportJob("offline-16", image_root, out_b,
                         template="a sketch of a {}."))
        ds_a, ds_b = load_dataset(out_a), load_dataset(out_b)
        assert not np.allclose(ds_a.text_features, ds_b.text_features)
        np.testing.assert_array_equal(ds_a.features, ds_b.features)

    def test_unreadable_image_skipped_and_counted(self, image_root, tmp_path):
        (image_root / "cat" / "broken.png").write_bytes(b"not an image")
        out = tmp_path / "out"
        with pytest.warns(UserWarning, match="unreadable"):
            export(ExportJob("offline-16", image_root, out))
        ds = load_dataset(out)
        assert ds.count == 6
        manifest = (out / "manifest").read_text()
        assert "skipped_unreadable=1" in manifest

    def test_all_unreadable_raises(self, tmp_path):
        root = make_image_root(tmp_path / "images", classes=("cat",))
        broken = root / "dog"
        broken.mkdir()
        (broken / "bad.png").write_bytes(b"junk")
        with pytest.raises(EmptyClassFolderError), pytest.warns(UserWarning):
            export(ExportJob("offline-16", root, tmp_path / "out"))

    def test_no_class_folders_raises(self, tmp_path):
        empty = tmp_path / "images"
        empty.mkdir()
        with pytest.raises(EmptyClassFolderError):
            export(ExportJob("offline-16", empty, tmp_path / "out"))

    def test_batching_does_not_change_output(self, image_root, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        export(ExportJob("offline-16", image_root, out_a, batch_size=1))
        export(ExportJob("offline-16", image_root, out_b, batch_size=32))
        assert (out_a / "features.bin").read_bytes() == \
            (out_b / "features.bin").read_bytes()


class TestCli:
    def test_export_ok(self, image_root, tmp_path, capsys):
        out = tmp_path / "out"
        rc = cli_main([
            "export", "--model", "offline-16",
            "--images", str(image_root), "--out", str(out),
        ])
        assert rc == 0
        assert "wrote" in capsys.readouterr().out
        assert load_dataset(out).count == 6

    def test_template_without_placeholder_is_usage_error(
        self, image_root, tmp_path
    ):
        with pytest.raises(SystemExit) as exc:
            cli_main([
                "export", "--model", "offline-16",
                "--images", str(image_root), "--out", str(tmp_path / "out"),
                "--template", "a photo of a cat",
            ])
        assert exc.value.code == 2

    def test_export_failure_exit_code(self, tmp_path):
        empty = tmp_path / "images"
        empty.mkdir()
        rc = cli_main([
            "export", "--model", "offline-16",
            "--images", str(empty), "--out", str(tmp_path / "out"),
        ])
        assert rc == 3

    def test_console_script_installed(self, image_root, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "xmod_export.cli",
             "export", "--model", "offline-8",
             "--images", str(image_root), "--out", str(tmp_path / "out")],
            capture_output=True, text=True,
        )
        assert result.returncode == 0, result.stderr


class TestCommittedFixture:
    FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "exported_sample"

    def test_fixture_loads_with_zero_warnings(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ds = load_dataset(self.FIXTURE)
        assert ds.count == 6
        assert ds.num_classes == 2
