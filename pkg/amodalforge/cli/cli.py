"""
Command line interface: generate datasets, print their statistics, evaluate detections and render inspection panels.
"""
import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from PIL import Image

import amodalforge
from amodalforge.annotate import compute_stats, category_table
from amodalforge.compositor import generate_batch
from amodalforge.config import GenerationConfig, ConfigError, load_config, default_workers, MODES
from amodalforge.datastore import write_dataset, read_dataset, read_annotations, dataset_splits, annotations_file
from amodalforge.errors import AmodalForgeError
from amodalforge.evalkit import APConfig, load_detections, evaluate_ap, nms_per_image, collapse_layers, NMS_MODES, GROUPINGS, TARGETS
from amodalforge.sprites import ingest_sprites, ingest_backgrounds, procedural_library, procedural_backgrounds
from amodalforge.tracker import GenerationTracker

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('generate', 'stats', 'eval', 'inspect')

# Seed of the procedural sprite library and of sprite partitions. Fixed so every split of a dataset sees the same library.
LIBRARY_SEED = 0


@dataclass
class CommandConfig:
    """
    A parsed command line: the subcommand, the optional configuration file, the overrides given as flags and the verbosity. Overrides set to None were not given and leave file values alone.
    """
    subcommand: str
    configFile: Optional[str] = None
    overrides: dict = field(default_factory=dict)
    verbosity: int = 0
    args: argparse.Namespace = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"Unknown subcommand '{self.subcommand}', expected one of {SUBCOMMANDS}")

    def generation_config(self):
        """
        The configuration file (or the defaults) with the flag overrides applied.
        """
        config = load_config(self.configFile) if self.configFile else GenerationConfig()
        return config.with_overrides(**self.overrides)

    def workers(self):
        threads = getattr(self.args, 'threads', None)
        return threads if threads is not None else default_workers()


def parse_partition(text):
    """
    Parse 'train=0.8,test=0.2' into {'train': 0.8, 'test': 0.2}.
    """
    if text is None:
        return None
    partition = {}
    for item in text.split(','):
        name, sep, value = item.partition('=')
        try:
            partition[name.strip()] = float(value)
        except ValueError:
            sep = ''
        if not sep or not name.strip():
            raise ConfigError(f"Sprite partition must look like 'train=0.8,test=0.2', got {text!r}")
    return partition


def build_parser():
    parser = argparse.ArgumentParser(prog='amodalforge', description='Synthesise amodal occlusion datasets and evaluate amodal detections.')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='More logging (-v info, -vv debug).')
    parser.add_argument('-q', '--quiet', action='store_true', help='Only log errors.')
    parser.add_argument('--show-config', action='store_true', help='Print the resolved generation configuration and exit.')
    parser.add_argument('--config', help='Generation configuration JSON file.')
    sub = parser.add_subparsers(dest='subcommand')

    gen = sub.add_parser('generate', help='Generate a dataset split.')
    gen.add_argument('--config', dest='subConfig', help='Generation configuration JSON file.')
    gen.add_argument('--output', '-o', help='Dataset directory.')
    gen.add_argument('--procedural', action='store_true', help='Use procedural sprites and backgrounds.')
    gen.add_argument('--sprites', help='Sprite directory, one subdirectory per category.')
    gen.add_argument('--backgrounds', help='Background texture directory.')
    gen.add_argument('--seed', type=int)
    gen.add_argument('--count', type=int)
    gen.add_argument('--split')
    gen.add_argument('--mode', choices=MODES)
    gen.add_argument('--sprite-partition', help="Disjoint sprite pools, for example 'train=0.8,test=0.2'.")
    gen.add_argument('--threads', type=int, help=f'Worker threads. Defaults to ${amodalforge.THREADS_ENV} or the CPU count minus two.')
    gen.add_argument('--no-appearances', action='store_true', help='Do not write appearance rasters.')
    gen.add_argument('--progress', action='store_true', help='Show progress bars.')
    gen.add_argument('--show-config', dest='subShowConfig', action='store_true', help='Print the resolved configuration and exit.')

    stats = sub.add_parser('stats', help='Print dataset statistics.')
    stats.add_argument('dataset', help='Dataset directory.')
    stats.add_argument('--split', action='append', help='Split to include (repeatable). The default is every split.')
    stats.add_argument('--output', '-o', help='Write the statistics as JSON.')

    ev = sub.add_parser('eval', help='Evaluate detections against a dataset split.')
    ev.add_argument('dataset', help='Dataset directory.')
    ev.add_argument('detections', help='Detections JSON file.')
    ev.add_argument('--split', default='test')
    ev.add_argument('--grouping', choices=GROUPINGS, default='category')
    ev.add_argument('--target', choices=TARGETS, default='box')
    ev.add_argument('--nms-mode', choices=('none',) + NMS_MODES, default='none')
    ev.add_argument('--nms-threshold', type=float, default=0.5)
    ev.add_argument('--collapse', action='store_true', help='Drop predicted layers after NMS.')
    ev.add_argument('--max-dets', type=int)
    ev.add_argument('--threads', type=int)
    ev.add_argument('--output', '-o', help='Write the report as JSON.')

    ins = sub.add_parser('inspect', help='Render an overlay panel of one image.')
    ins.add_argument('dataset', help='Dataset directory.')
    ins.add_argument('--split', default='train')
    ins.add_argument('--image-id', type=int, required=True)
    ins.add_argument('--output', '-o', required=True, help='Output image file.')
    return parser


def parse_args(argv=None):
    """
    Parse a command line into a CommandConfig.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None and not args.show_config:
        parser.error(f'a subcommand is required, one of {", ".join(SUBCOMMANDS)}')
    overrides = {}
    if args.subcommand == 'generate':
        overrides = {'seed': args.seed, 'count': args.count, 'split': args.split, 'mode': args.mode,
                     'spritePartition': parse_partition(args.sprite_partition),
                     'writeAppearances': False if args.no_appearances else None}
        args.show_config = args.show_config or args.subShowConfig
    configFile = getattr(args, 'subConfig', None) or args.config
    verbosity = -1 if args.quiet else args.verbose
    return CommandConfig(subcommand=args.subcommand or 'generate', configFile=configFile, overrides=overrides, verbosity=verbosity, args=args)


def show_config(cmd):
    print(json.dumps(cmd.generation_config().to_dict(), indent=2, sort_keys=True))
    return 0


def _print_stats(statsBySplit):
    for split, stats in statsBySplit.items():
        print(f'== {split} ==')
        print(stats.to_table().to_string(index=False))
        print(stats.layer_table().to_string())
    table = category_table(statsBySplit)
    print(table.to_string(formatters={'Ratio': lambda r: f'{100 * r:.1f}%'}))


def cmd_generate(cmd):
    """
    Generate one split and write it, with its statistics report, to the output directory.
    """
    args = cmd.args
    config = cmd.generation_config()
    if args.show_config:
        return show_config(cmd)
    if not args.output:
        raise ConfigError('generate needs --output')
    workers = cmd.workers()
    if args.procedural:
        library = procedural_library(seed=LIBRARY_SEED, size=max(4, min(config.canvas) // 4))
        backgrounds = procedural_backgrounds(canvas=config.canvas, seed=LIBRARY_SEED)
    elif args.sprites and args.backgrounds:
        library = ingest_sprites(args.sprites, config.chromaKey, config.keyTolerance, workers=workers)
        backgrounds = ingest_backgrounds(args.backgrounds, config.canvas, workers=workers)
    else:
        raise ConfigError('generate needs --procedural, or both --sprites and --backgrounds')
    if config.spritePartition:
        library = library.partition(config.spritePartition, seed=LIBRARY_SEED)[config.split]
    logger.info('Generating %d %s scene(s) with seed %d on %d thread(s)', config.count, config.mode, config.seed, workers)
    tracker = GenerationTracker()
    scenes = generate_batch(library, backgrounds, config, workers=workers, tracker=tracker, progress=args.progress)
    out = Path(args.output)
    write_dataset(scenes, out, split=config.split, categories=library.categories, config=config, nPoints=config.pointsPerInstance,
                  workers=workers, writeAppearances=config.writeAppearances, progress=args.progress)
    record = read_annotations(out / annotations_file(config.split))
    stats = compute_stats(record)
    with open(out / f'stats_{config.split}.json', 'w') as f:
        json.dump(stats.to_dict(), f, indent=2, sort_keys=True)
    if cmd.verbosity > 0:
        tracker.report()
    print(f'Wrote {stats.imageCount} images with {stats.instanceCount} instances to {out}')
    print(f'Occluded instances: {100 * stats.occludedFraction():.1f}%, average occlusion rate: {stats.occlusionRate:.1f}%')
    print('Layer histogram: ' + ', '.join(f'L{k}={n}' for k, n in enumerate(stats.layerHistogram)))
    return 0


def cmd_stats(cmd):
    """
    Print the statistics of the splits of a dataset.
    """
    args = cmd.args
    splits = args.split or dataset_splits(args.dataset)
    statsBySplit = {split: compute_stats(read_dataset(args.dataset, split)) for split in splits}
    _print_stats(statsBySplit)
    if args.output:
        with open(args.output, 'w') as f:
            json.dump({s: st.to_dict() for s, st in statsBySplit.items()}, f, indent=2, sort_keys=True)
    return 0


def cmd_eval(cmd):
    """
    Evaluate a detections file. NMS, when requested, is applied before the layer collapse.
    """
    args = cmd.args
    record = read_dataset(args.dataset, args.split)
    dets = load_detections(args.detections)
    if args.nms_mode != 'none':
        before = len(dets)
        dets = nms_per_image(dets, args.nms_threshold, args.nms_mode)
        print(f'{args.nms_mode} NMS at IoU {args.nms_threshold:.2f} kept {len(dets)} of {before} detections')
    if args.collapse:
        dets = collapse_layers(dets)
    config = APConfig(grouping=args.grouping, target=args.target, maxDets=args.max_dets)
    report = evaluate_ap(record, dets, config, workers=cmd.workers())
    names = record.category_names() if args.grouping == 'category' else None
    print(report.to_table(names).to_string())
    if args.output:
        with open(args.output, 'w') as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    return 0


def render_overlay(record, imageId, directory=None):
    """
    Draw a three panel figure of one image: the image with amodal contours and points, the visible masks, and the invisible regions hatched with each instance's layer.

    Returns
    -------
    fig : matplotlib Figure
    """
    image = record.image(imageId)
    maskSets = record.mask_sets(imageId)
    points = record.point_annotations(imageId)
    layers = [a['layer'] for a in record.annotations_by_image().get(imageId, [])]
    path = Path(directory) / image['file_name'] if directory is not None else None
    if path is not None and path.is_file():
        with Image.open(path) as im:
            pixels = np.asarray(im.convert('RGB'))
    else:
        pixels = np.full((image['height'], image['width'], 3), 200, dtype=np.uint8)
    colours = [f'C{k % 10}' for k in range(len(maskSets))]
    fig = Figure(figsize=(12, 4.4))
    FigureCanvasAgg(fig)
    axs = fig.subplots(1, 3)
    axs[0].imshow(pixels)
    for m, pts, c in zip(maskSets, points, colours):
        axs[0].contour(m.amodal.astype(float), levels=[0.5], colors=[c], linewidths=1.2)
        xy, labels = pts.coordinates(), pts.labels()
        # Pixel (r, c) covers [c, c + 1) x [r, r + 1), imshow centres it on (c, r)
        inside = labels == 1
        axs[0].scatter(xy[inside, 0] - 0.5, xy[inside, 1] - 0.5, marker='o', s=14, color='red', edgecolors='k', linewidths=0.4)
        axs[0].scatter(xy[~inside, 0] - 0.5, xy[~inside, 1] - 0.5, marker='x', s=14, color='blue')
    axs[0].set_title(f'Image {imageId}: amodal contours and points')
    visible = np.zeros(pixels.shape[:2], dtype=int)
    for k, m in enumerate(maskSets):
        visible[m.visible] = k + 1
    axs[1].imshow(visible, cmap='tab10', vmin=0, vmax=10, interpolation='nearest')
    axs[1].set_title('Visible masks')
    axs[2].imshow(pixels, alpha=0.35)
    for m, layer, c in zip(maskSets, layers, colours):
        axs[2].contour(m.amodal.astype(float), levels=[0.5], colors=[c], linewidths=1.0)
        if m.invisible.any():
            axs[2].contourf(m.invisible.astype(float), levels=[0.5, 1.5], colors='none', hatches=['////'])
            axs[2].contour(m.invisible.astype(float), levels=[0.5], colors=[c], linewidths=0.8, linestyles='dashed')
        x, y, _, _ = m.amodalBbox
        axs[2].text(x, y, f'L{layer}', color=c, fontsize=9, va='top', fontweight='bold')
    axs[2].set_title('Invisible regions (hatched) and layers')
    for ax in axs:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    return fig


def cmd_inspect(cmd):
    """
    Render the overlay panel of one image to a file.
    """
    args = cmd.args
    record = read_dataset(args.dataset, args.split)
    try:
        fig = render_overlay(record, args.image_id, args.dataset)
    except KeyError as e:
        print(f'amodalforge: error: {e.args[0]}', file=sys.stderr)
        return 1
    fig.savefig(args.output, dpi=120)
    print(f'Wrote {args.output}')
    return 0


COMMANDS = {'generate': cmd_generate, 'stats': cmd_stats, 'eval': cmd_eval, 'inspect': cmd_inspect}


def configure_logging(verbosity):
    level = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s', force=True)
    logging.captureWarnings(True)
    if verbosity < 0:
        warnings.simplefilter('ignore')


def main(argv=None):
    """
    Run the command line. Returns the exit status: 0 on success, 1 on a configuration, data or I/O error.
    """
    try:
        cmd = parse_args(argv)
    except ConfigError as e:
        print(f'amodalforge: error: {e}', file=sys.stderr)
        return 1
    configure_logging(cmd.verbosity)
    try:
        if cmd.args.subcommand is None or (cmd.subcommand != 'generate' and cmd.args.show_config):
            return show_config(cmd)
        return COMMANDS[cmd.subcommand](cmd)
    except (AmodalForgeError, OSError) as e:
        logger.debug('Command failed', exc_info=True)
        print(f'amodalforge: error: {e}', file=sys.stderr)
        return 1
