import os
import re
import tomllib
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace

from dotenv import load_dotenv

from exceptions import ConfigError

# Load environment variables from .env file
load_dotenv()

# Compute absolute paths relative to the project root
basedir = os.path.dirname(os.path.abspath(__file__))

# Service log, CLI console and per-stage logs share one line format
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


class Config:
    SECRET_KEY = os.environ.get('SECRET_KEY', 'dev-secret-key')

    # Stage manifest database - always use absolute path
    SQLALCHEMY_DATABASE_URI = os.environ.get('DATABASE_URL') or \
        'sqlite:///' + os.path.join(basedir, 'instance', 'lifter.db')
    SQLALCHEMY_TRACK_MODIFICATIONS = False
    SQLALCHEMY_ENGINE_OPTIONS = {
        "pool_recycle": 300,
        "pool_pre_ping": True,
    }

    # Toolchain
    LIFTER_CLANG = os.environ.get('LIFTER_CLANG', 'clang')
    LIFTER_GCC = os.environ.get('LIFTER_GCC', 'gcc')

    # Artifacts and logs
    ARTIFACTS_DIR = os.environ.get('LIFTER_ARTIFACTS') or os.path.join(basedir, 'artifacts')
    LOG_DIR = os.environ.get('LIFTER_LOG_DIR') or os.path.join(basedir, 'logs')
    LOG_LEVEL = os.environ.get('LIFTER_LOG_LEVEL', 'INFO')

    # Model served by the HTTP blueprint
    LIFTER_CHECKPOINT = os.environ.get('LIFTER_CHECKPOINT')
    LIFTER_VOCAB = os.environ.get('LIFTER_VOCAB')
    LIFTER_REPORT = os.environ.get('LIFTER_REPORT')
    MAX_CONTENT_LENGTH = 1 * 1024 * 1024  # 1MB of assembly per request


class TestingConfig(Config):
    TESTING = True
    SQLALCHEMY_DATABASE_URI = 'sqlite://'
    SQLALCHEMY_ENGINE_OPTIONS = {}


def toolchain(name):
    """Resolve a compiler binary, honouring LIFTER_CLANG / LIFTER_GCC overrides."""
    if name == 'clang':
        return os.environ.get('LIFTER_CLANG', Config.LIFTER_CLANG)
    if name == 'gcc':
        return os.environ.get('LIFTER_GCC', Config.LIFTER_GCC)
    raise ConfigError(f"Unknown compiler: {name}")


# ---------------------------------------------------------------------------
# Pipeline configuration (TOML)
# ---------------------------------------------------------------------------

@dataclass
class PathsConfig:
    workdir: str = 'work'
    input: str = 'toy'
    dataset: str = 'work/dataset.jsonl'
    vocab: str = 'work/vocab.json'
    checkpoints: str = 'work/checkpoints'
    artifacts: str = 'work/artifacts'
    predictions: str = 'work/predictions.jsonl'
    verdicts: str = 'work/verdicts.jsonl'
    report: str = 'work/report.md'
    report_csv: str = 'work/report.csv'


@dataclass
class CorpusConfig:
    specs: list = field(default_factory=lambda: [
        'clang:x86_64:O3:asm_text',
        'clang:aarch64:O3:asm_text',
        'clang:riscv64:O3:asm_text',
        'gcc:x86_64:O3:asm_text',
        'clang:host:Oz:llvm_ir',
    ])
    ratios: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    benchmark: str = 'toy'
    toy_size: int = 200
    max_tokens: int = 2048
    target: str = 'clang:host:Oz:llvm_ir'


@dataclass
class TokenizerConfig:
    vocab_size: int = 2000
    mode: str = 'shared'  # 'shared' or 'incremental'


@dataclass
class ModelSection:
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_dim: int = 256
    max_positions: int = 2048
    dropout: float = 0.1


@dataclass
class TrainProfile:
    lr: float = 1e-4
    warmup: int = 10000
    batch: int = 16
    weight_decay: float = 5e-3
    max_steps: int = 2000
    eval_every: int = 100
    checkpoint_every: int = 500


@dataclass
class ExtendSection:
    chain: list = field(default_factory=lambda: ['x86_64', 'aarch64', 'riscv64'])
    source_opts: list = field(default_factory=lambda: ['O3'])
    compilers: list = field(default_factory=lambda: ['clang'])
    full_ft: bool = False
    profile: TrainProfile = field(default_factory=lambda: TrainProfile(
        lr=5e-5, warmup=5000, max_steps=1000))


@dataclass
class VerifySection:
    timeout: float = 5.0
    compile_timeout: float = 30.0
    jobs: int = 4
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    skip_after_pass: bool = True
    beam: int = 5
    split: str = 'test'  # records lifted and verified


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainProfile = field(default_factory=TrainProfile)
    extend: ExtendSection = field(default_factory=ExtendSection)
    verify: VerifySection = field(default_factory=VerifySection)
    seed: int = 0
    jobs: int = 1

    def to_dict(self):
        return asdict(self)


_VAR_RE = re.compile(r'\$\{(\w+)\}|\$(\w+)')


def interpolate_env(value):
    """Expand ${VAR} and $VAR references in strings; unknown variables are an error."""
    if isinstance(value, str):
        def repl(match):
            var = match.group(1) or match.group(2)
            if var not in os.environ:
                raise ConfigError(f"Environment variable '{var}' referenced in config is not set")
            return os.environ[var]
        return _VAR_RE.sub(repl, value)
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    return value


def _build(cls, data, where, base=None):
    """Overlay a TOML table on a dataclass; nested tables keep the defaults they don't mention."""
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    base = base if base is not None else cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"Unknown key '{key}' in [{where}]")
        default = getattr(base, key)
        if is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{where}.{key}", default)
        else:
            kwargs[key] = value
    return replace(base, **kwargs)


def load_pipeline_config(path=None, overrides=None):
    """
    Load a pipeline configuration from a TOML file.

    Args:
        path (str): TOML file; None yields the built-in defaults
        overrides (dict): Top-level values (seed, jobs) taking precedence

    Returns:
        PipelineConfig: Validated configuration
    """
    data = {}
    if path:
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML in {path}: {e}")
    data = interpolate_env(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    config = _build(PipelineConfig, data, 'root')
    validate_pipeline_config(config)
    return config


def override_config(config, overrides):
    """
    Apply dotted-key overrides (``paths.dataset``, ``extend.profile.lr``) to a
    loaded configuration and validate the result. None values are ignored.

    Raises:
        ConfigError: Unknown key or an invalid resulting configuration
    """
    data = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = dotted.split('.')
        table = data
        for name in parents:
            table = table.setdefault(name, {})
        table[leaf] = value
    if not data:
        return config
    config = _build(PipelineConfig, data, 'root', config)
    validate_pipeline_config(config)
    return config


def validate_pipeline_config(config):
    from corpus import CompilationSpec

    for key in config.corpus.specs:
        try:
            CompilationSpec.from_key(key)
        except ValueError as e:
            raise ConfigError(f"Bad compilation spec '{key}': {e}")
    try:
        target = CompilationSpec.from_key(config.corpus.target)
    except ValueError as e:
        raise ConfigError(f"Bad corpus.target '{config.corpus.target}': {e}")
    if target.representation.value != 'llvm_ir' or target.isa.value != 'host':
        raise ConfigError(f"corpus.target must be host LLVM IR (clang:host:<opt>:llvm_ir), got '{target.key}'")
    if abs(sum(config.corpus.ratios) - 1.0) > 1e-9 or len(config.corpus.ratios) != 3:
        raise ConfigError(f"Split ratios must be three values summing to 1, got {config.corpus.ratios}")
    if config.tokenizer.mode not in ('shared', 'incremental'):
        raise ConfigError(f"tokenizer.mode must be 'shared' or 'incremental', not '{config.tokenizer.mode}'")
    if config.model.d_model % config.model.n_heads != 0:
        raise ConfigError("model.d_model must be divisible by model.n_heads")
    if config.verify.split not in ('train', 'valid', 'test'):
        raise ConfigError(f"verify.split must be train, valid or test, not '{config.verify.split}'")
    if not config.extend.chain:
        raise ConfigError("extend.chain needs at least the base ISA")
    for compiler in config.extend.compilers:
        for isa in config.extend.chain:
            for opt in config.extend.source_opts:
                try:
                    CompilationSpec(compiler, isa, opt, 'asm_text')
                except ValueError as e:
                    raise ConfigError(f"Bad extension source {compiler}:{isa}:{opt}: {e}")
    input_path = config.paths.input
    if input_path != 'toy' and not os.path.exists(input_path):
        raise ConfigError(f"Input functions file not found: {input_path}")
