import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Ten small PNGs; img_09.png is a byte-identical copy of img_02.png."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(1234)
    for i in range(9):
        pixels = rng.integers(0, 256, size=(48, 48, 3), dtype=np.uint8)
        Image.fromarray(pixels, "RGB").save(root / f"img_{i:02d}.png")
    (root / "img_09.png").write_bytes((root / "img_02.png").read_bytes())
    return root


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    torch = pytest.importorskip("torch")
    from tinynet import TinyNet

    torch.manual_seed(7)
    model = TinyNet(num_classes=5).eval()
    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    torch.save(model, path)
    return path
