import json

import pytest

import amodalforge
from amodalforge.config import GenerationConfig, IntraClass, InterClass, ConfigError, load_config, default_workers


class TestGenerationConfig:
    @pytest.mark.cheap
    def test_defaults(self):
        config = GenerationConfig()
        assert config.canvas == amodalforge.DEFAULT_CANVAS
        assert (config.minInstances, config.maxInstances) == (2, 5)
        assert config.scaleRange == (0.5, 1.5)
        assert config.rotationRange == (0.0, 360.0)
        assert config.mode == 'intra'
        assert config.spritePartition is None
        assert config.writeAppearances

    @pytest.mark.cheap
    def test_dict(self):
        config = GenerationConfig(canvas=(128, 96), seed=11, spritePartition={'train': 0.5, 'test': 0.5})
        d = config.to_dict()
        assert 'NAME' not in d
        assert d['canvas'] == [128, 96]
        assert GenerationConfig.from_dict(json.loads(json.dumps(d))) == config
        with pytest.raises(ConfigError, match='colour'):
            GenerationConfig.from_dict({'colour': 'red'})

    @pytest.mark.cheap
    def test_save_load(self, tmp_path):
        config = GenerationConfig(mode='inter', count=7, scaleRange=(0.25, 2))
        config.save(tmp_path / 'config.json')
        assert load_config(tmp_path / 'config.json') == config
        (tmp_path / 'partial.json').write_text('{"count": 3}')
        assert load_config(tmp_path / 'partial.json') == GenerationConfig(count=3)
        (tmp_path / 'list.json').write_text('[1, 2]')
        with pytest.raises(ConfigError):
            load_config(tmp_path / 'list.json')
        (tmp_path / 'broken.json').write_text('{"count": ')
        with pytest.raises(ConfigError):
            load_config(tmp_path / 'broken.json')

    @pytest.mark.cheap
    def test_overrides(self):
        config = GenerationConfig(count=20, seed=4)
        assert config.with_overrides(seed=None, count=None) == config
        changed = config.with_overrides(seed=9, mode=None)
        assert changed.seed == 9
        assert changed.count == 20
        assert config.seed == 4

    @pytest.mark.cheap
    @pytest.mark.parametrize('values', [{'canvas': (0, 10)}, {'minInstances': 0}, {'minInstances': 4, 'maxInstances': 3},
                                        {'scaleRange': (0, 1)}, {'scaleRange': (2, 1)}, {'rotationRange': (10, 0)},
                                        {'mode': 'mixed'}, {'count': 0}, {'maxRetries': -1}, {'minOnCanvas': 0},
                                        {'pointsPerInstance': 0}, {'spritePartition': {'test': 1.0}},
                                        {'spritePartition': {'train': 0.0, 'test': 1.0}}])
    def test_invalid(self, values):
        with pytest.raises(ConfigError):
            GenerationConfig(**values)

    @pytest.mark.cheap
    def test_presets(self):
        intra, inter = IntraClass(seed=2), InterClass(count=5)
        assert intra.mode == 'intra' and intra.NAME == 'IntraClass' and intra.seed == 2
        assert inter.mode == 'inter' and inter.NAME == 'InterClass' and inter.count == 5
        # The preset name is not part of the saved configuration
        assert inter.to_dict() == GenerationConfig(mode='inter', count=5).to_dict()


class TestWorkers:
    @pytest.mark.cheap
    def test_env(self, monkeypatch):
        monkeypatch.setenv(amodalforge.THREADS_ENV, '3')
        assert default_workers() == 3
        monkeypatch.setenv(amodalforge.THREADS_ENV, '0')
        assert default_workers() == 1
        monkeypatch.setenv(amodalforge.THREADS_ENV, 'three')
        with pytest.raises(ConfigError):
            default_workers()

    @pytest.mark.cheap
    def test_cpu_count(self, monkeypatch):
        monkeypatch.delenv(amodalforge.THREADS_ENV, raising=False)
        monkeypatch.setattr('os.cpu_count', lambda: 8)
        assert default_workers() == 6
        monkeypatch.setattr('os.cpu_count', lambda: None)
        assert default_workers() == 1
