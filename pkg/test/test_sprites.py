import json
import math

import numpy as np
import pytest
from PIL import Image

import amodalforge
from amodalforge.errors import IngestError, EmptyMaskError, DegenerateShapeError
from amodalforge.sprites import (Sprite, ProceduralParams, generate_procedural_sprite, procedural_library, procedural_backgrounds,
                                 ingest_sprites, ingest_backgrounds, chroma_key_alpha, save_sprite, load_sprite)
from amodalforge.utils import make_rng


def write_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


class TestSprite:
    @pytest.mark.cheap
    def test_alpha_threshold(self):
        alpha = np.array([[0.0, 0.49], [0.5, 1.0]], dtype=np.float32)
        s = Sprite.from_rgba('a', 0, np.zeros((2, 2, 3)), alpha)
        assert np.array_equal(s.baseMask, [[False, False], [True, True]])
        assert s.area == 2
        # Arrays are frozen
        with pytest.raises(ValueError):
            s.baseMask[0, 0] = True

    @pytest.mark.cheap
    def test_uint8_input(self):
        alpha = np.full((3, 3), 255, dtype=np.uint8)
        s = Sprite.from_rgba('a', 1, np.full((3, 3, 3), 255, dtype=np.uint8), alpha)
        assert s.pixels.dtype == np.float32
        assert np.all(s.pixels == 1)
        assert s.shape == (3, 3)

    @pytest.mark.cheap
    def test_low_alpha_rejected(self):
        with pytest.raises(EmptyMaskError):
            Sprite.from_rgba('a', 0, np.zeros((4, 4, 3)), np.full((4, 4), 0.3))

    @pytest.mark.cheap
    def test_bad_shapes(self):
        with pytest.raises(IngestError):
            Sprite.from_rgba('a', 0, np.zeros((4, 4, 3)), np.ones((4, 5)))
        with pytest.raises(IngestError):
            Sprite.from_rgba('a', -1, np.zeros((4, 4, 3)), np.ones((4, 4)))

    @pytest.mark.cheap
    def test_chroma_key(self):
        rgb = np.full((4, 4, 3), 255, dtype=np.uint8)
        rgb[1:3, 1:3] = (200, 10, 10)
        rgb[0, 0] = (250, 250, 250)
        alpha = chroma_key_alpha(rgb)
        expected = np.zeros((4, 4))
        expected[1:3, 1:3] = 1
        assert np.array_equal(alpha, expected)


class TestProcedural:
    @pytest.mark.cheap
    def test_circle_area(self):
        s = generate_procedural_sprite(ProceduralParams(family='circle', size=16), make_rng(7))
        assert math.pi * 15 ** 2 <= s.area <= math.pi * 17 ** 2
        # Independent point-in-circle count about the raster centre
        h, w = s.shape
        y, x = np.mgrid[0:h, 0:w]
        inside = (x + 0.5 - w / 2) ** 2 + (y + 0.5 - h / 2) ** 2 <= 16 ** 2
        assert np.array_equal(s.baseMask, inside)

    @pytest.mark.cheap
    def test_square_area(self):
        s = generate_procedural_sprite(ProceduralParams(family='square', size=10), make_rng(0))
        assert s.area == 100
        assert s.shape == (10, 10)

    @pytest.mark.cheap
    def test_deterministic(self):
        for family in ('circle', 'square', 'superellipse', 'polygon'):
            params = ProceduralParams(family=family, size=12, textureSeed=5)
            a = generate_procedural_sprite(params, make_rng(7))
            b = generate_procedural_sprite(params, make_rng(7))
            assert np.array_equal(a.baseMask, b.baseMask)
            assert np.array_equal(a.pixels, b.pixels)

    @pytest.mark.cheap
    def test_degenerate(self):
        with pytest.raises(DegenerateShapeError):
            generate_procedural_sprite(ProceduralParams(family='circle', size=0), make_rng(0))
        with pytest.raises(DegenerateShapeError):
            generate_procedural_sprite(ProceduralParams(family='square', size=2), make_rng(0))
        with pytest.raises(DegenerateShapeError):
            generate_procedural_sprite(ProceduralParams(family='polygon', size=10, vertices=2), make_rng(0))
        with pytest.raises(DegenerateShapeError):
            generate_procedural_sprite(ProceduralParams(family='blob', size=10), make_rng(0))

    @pytest.mark.cheap
    def test_library(self):
        lib = procedural_library(nCategories=4, spritesPerCategory=3, seed=1, size=8)
        assert lib.n_categories() == 4
        assert lib.counts() == {0: 3, 1: 3, 2: 3, 3: 3}
        assert len(lib) == 12
        assert lib.ids()[0] == 'shape00/000'
        assert 'shape03/002' in lib
        assert lib.get('shape02/001').category == 2
        again = procedural_library(nCategories=4, spritesPerCategory=3, seed=1, size=8)
        assert all(np.array_equal(lib.get(i).baseMask, again.get(i).baseMask) for i in lib.ids())
        other = procedural_library(nCategories=4, spritesPerCategory=3, seed=2, size=8)
        assert not all(np.array_equal(lib.get(i).pixels, other.get(i).pixels) for i in lib.ids())

    @pytest.mark.cheap
    def test_backgrounds(self):
        bgs = procedural_backgrounds(n=3, canvas=(40, 30), seed=0)
        assert [b.id for b in bgs] == ['procedural/000', 'procedural/001', 'procedural/002']
        assert bgs[0].canvas == (40, 30)
        assert bgs[0].pixels.shape == (30, 40, 3)
        assert 0 <= bgs[0].pixels.min() and bgs[0].pixels.max() <= 1


class TestLibrary:
    @pytest.mark.cheap
    def test_partition(self):
        lib = procedural_library(nCategories=3, spritesPerCategory=5, size=8)
        pools = lib.partition({'train': 0.8, 'test': 0.2}, seed=0)
        train, test = set(pools['train'].ids()), set(pools['test'].ids())
        assert train.isdisjoint(test)
        assert train | test == set(lib.ids())
        assert pools['test'].counts() == {0: 1, 1: 1, 2: 1}
        # Same seed, same pools
        assert lib.partition({'train': 0.8, 'test': 0.2}, seed=0)['test'].ids() == pools['test'].ids()

    @pytest.mark.cheap
    def test_partition_too_small(self):
        lib = procedural_library(nCategories=2, spritesPerCategory=1, size=8)
        with pytest.raises(IngestError):
            lib.partition({'train': 0.5, 'test': 0.5})

    @pytest.mark.cheap
    def test_manifest(self, tmp_path):
        lib = procedural_library(nCategories=2, spritesPerCategory=2, size=8)
        lib.dump_manifest(tmp_path / 'library.json')
        with open(tmp_path / 'library.json') as f:
            manifest = json.load(f)
        assert [c['name'] for c in manifest['categories']] == ['shape00', 'shape01']
        assert [s['id'] for s in manifest['sprites']] == lib.ids()


class TestIngest:
    @pytest.fixture
    def sprite_dir(self, tmp_path):
        root = tmp_path / 'sprites'
        rgba = np.zeros((8, 8, 4), dtype=np.uint8)
        rgba[..., 0] = 200
        rgba[..., 3] = 255
        write_png(root / 'pear' / 'full.png', rgba)
        rgb = np.full((6, 6, 3), 255, dtype=np.uint8)
        rgb[2:4, 1:5] = (10, 120, 10)
        write_png(root / 'apple' / 'keyed.png', rgb)
        faint = rgba.copy()
        faint[..., 3] = 77
        write_png(root / 'apple' / 'faint.png', faint)
        (root / 'apple' / 'broken.png').write_bytes(b'not a png')
        return root

    @pytest.mark.cheap
    def test_ingest(self, sprite_dir):
        with pytest.warns(UserWarning):
            lib = ingest_sprites(sprite_dir)
        assert lib.categories == ('apple', 'pear')
        assert lib.ids() == ['apple/keyed.png', 'pear/full.png']
        assert lib.get('pear/full.png').area == 64
        assert lib.get('pear/full.png').category == 1
        keyed = lib.get('apple/keyed.png')
        assert keyed.area == 8
        assert np.array_equal(np.argwhere(keyed.baseMask).min(axis=0), [2, 1])
        skipped = dict(lib.skipped)
        assert skipped['apple/faint.png'] == 'empty mask'
        assert skipped['apple/broken.png'].startswith('unreadable')

    @pytest.mark.cheap
    def test_ingest_threads(self, sprite_dir):
        with pytest.warns(UserWarning):
            a = ingest_sprites(sprite_dir, workers=1)
        with pytest.warns(UserWarning):
            b = ingest_sprites(sprite_dir, workers=3)
        assert a.ids() == b.ids()
        assert a.skipped == b.skipped

    @pytest.mark.cheap
    def test_no_categories(self, tmp_path):
        with pytest.raises(IngestError, match='no categories'):
            ingest_sprites(tmp_path)

    @pytest.mark.cheap
    def test_unreadable_category(self, tmp_path):
        (tmp_path / 'ghost').mkdir()
        (tmp_path / 'ghost' / 'a.png').write_bytes(b'garbage')
        with pytest.warns(UserWarning):
            with pytest.raises(IngestError, match='ghost'):
                ingest_sprites(tmp_path)

    @pytest.mark.cheap
    def test_save_and_load(self, tmp_path):
        s = generate_procedural_sprite(ProceduralParams(family='circle', size=6), make_rng(0), spriteId='c')
        save_sprite(s, tmp_path / 'c.png')
        loaded = load_sprite(tmp_path / 'c.png', 'c', 0)
        assert np.array_equal(loaded.baseMask, s.baseMask)

    @pytest.mark.cheap
    def test_backgrounds(self, tmp_path):
        big = np.random.default_rng(0).integers(0, 256, (512, 512, 3), dtype=np.uint8)
        exact = np.random.default_rng(1).integers(0, 256, (256, 256, 3), dtype=np.uint8)
        write_png(tmp_path / 'big.png', big)
        write_png(tmp_path / 'nested' / 'exact.png', exact)
        (tmp_path / 'corrupt.jpg').write_bytes(b'\xff\xd8 truncated')
        with pytest.warns(UserWarning):
            bgs = ingest_backgrounds(tmp_path, canvas=amodalforge.DEFAULT_CANVAS)
        assert [b.id for b in bgs] == ['big.png', 'nested/exact.png']
        assert bgs[0].pixels.shape == (256, 256, 3)
        assert np.array_equal(bgs[1].pixels, exact.astype(np.float32) / 255)

    @pytest.mark.cheap
    def test_no_backgrounds(self, tmp_path):
        with pytest.raises(IngestError):
            ingest_backgrounds(tmp_path)
