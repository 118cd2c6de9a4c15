from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .core.config import AppConfig, default_config, load_config
from .core.errors import FskBitEnergyError, NumericalError
from .core.runtime_log import append_runtime_log, read_runtime_logs, runtime_log_path
from .numerics.channel import ChannelKind, ChannelModel, Family, ModulationSpec
from .numerics.flows import run_curve_flow, run_mc_flow, run_minbe_flow, run_schedule_flow

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

MIN_MC_TRIALS = 10_000
DEFAULT_CONFIG = "config.yaml"
# value-taking flags whose argument may start with "-"
VALUE_FLAGS = ("--snr-db",)


def parse_db_range(text: str, *, allow_descending: bool = False) -> List[float]:
    """Parse ``start:stop:step``; stop is included when within half a step."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"Faixa invalida '{text}', use inicio:fim:passo.")
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError as exc:
        raise ValueError(f"Faixa invalida '{text}': {exc}") from exc
    if not all(math.isfinite(v) for v in (start, stop, step)) or step == 0:
        raise ValueError(f"Faixa invalida '{text}': valores finitos e passo != 0.")
    if not allow_descending and (step < 0 or start >= stop):
        raise ValueError(f"Faixa invalida '{text}': exige passo > 0 e inicio < fim.")
    span = (stop - start) / step
    if span < 0:
        raise ValueError(f"Faixa invalida '{text}': passo na direcao errada.")
    count = math.floor(span + 0.5) + 1
    return [round(start + i * step, 10) for i in range(count)]


def _parse_int_list(text: str) -> List[int]:
    try:
        values = [int(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ValueError(f"Lista de inteiros invalida '{text}'.") from exc
    if not values:
        raise ValueError("Lista vazia.")
    return values


def _parse_float_list(text: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ValueError(f"Lista de numeros invalida '{text}'.") from exc
    if not values:
        raise ValueError("Lista vazia.")
    return values


def _add_modulation_args(cmd: argparse.ArgumentParser, *, single_m: bool = True) -> None:
    cmd.add_argument(
        "--modulation",
        required=True,
        choices=[family.value for family in Family],
        help="Familia de modulacao: fsk ou oofsk.",
    )
    cmd.add_argument(
        "--channel",
        default=ChannelKind.AWGN.value,
        choices=[kind.value for kind in ChannelKind],
        help="Modelo de canal.",
    )
    if single_m:
        cmd.add_argument("--m", type=int, required=True, help="Numero de tons M (>= 2).")
        cmd.add_argument(
            "--duty",
            type=float,
            default=1.0,
            help="Ciclo de trabalho nu em (0, 1]. Apenas OOFSK aceita valor != 1.",
        )
        cmd.add_argument(
            "--rician-k",
            type=float,
            default=None,
            help="Fator de Rice K (obrigatorio nos canais com desvanecimento).",
        )


def _add_output_args(cmd: argparse.ArgumentParser, *, workers: bool = True) -> None:
    cmd.add_argument(
        "--output",
        default=None,
        help="Arquivo CSV de saida. Sem este argumento o CSV vai para stdout.",
    )
    if workers:
        cmd.add_argument(
            "--workers",
            type=int,
            default=None,
            help="Threads para pontos independentes (default vem do config).",
        )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsk-bitenergy",
        description="Taxas com decisao abrupta e energia por bit minima para FSK e OOFSK.",
    )
    parser.add_argument(
        "--config",
        default=None,
        help="Caminho para o arquivo de configuracao YAML (default: config.yaml se existir).",
    )
    parser.add_argument(
        "--env-file",
        default=".env",
        help="Arquivo .env usado para resolver variaveis no config.",
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    curve_cmd = subparsers.add_parser(
        "curve",
        help="Gera curva de taxa, eficiencia espectral e Eb/N0 em uma grade de SNR.",
    )
    _add_modulation_args(curve_cmd)
    curve_cmd.add_argument(
        "--snr-db",
        required=True,
        help="Grade de SNR em dB no formato inicio:fim:passo.",
    )
    _add_output_args(curve_cmd)

    minbe_cmd = subparsers.add_parser(
        "minbe",
        help="Localiza a energia por bit minima para cada M, nu e K.",
    )
    _add_modulation_args(minbe_cmd, single_m=False)
    minbe_cmd.add_argument("--m-list", required=True, help="Lista de M separada por virgula.")
    minbe_cmd.add_argument(
        "--duty-list",
        default="1",
        help="Lista de ciclos de trabalho separada por virgula (default: 1).",
    )
    k_group = minbe_cmd.add_mutually_exclusive_group()
    k_group.add_argument("--rician-k", type=float, default=None, help="Fator de Rice K.")
    k_group.add_argument(
        "--rician-k-list",
        default=None,
        help="Lista de fatores de Rice separada por virgula.",
    )
    _add_output_args(minbe_cmd)

    mc_cmd = subparsers.add_parser(
        "mc",
        help="Compara probabilidades de transicao analiticas com Monte Carlo.",
    )
    _add_modulation_args(mc_cmd)
    mc_cmd.add_argument("--snr-db", type=float, required=True, help="SNR em dB.")
    mc_cmd.add_argument(
        "--trials",
        type=int,
        default=None,
        help="Tentativas por simbolo de entrada (default vem do config, minimo 10000).",
    )
    mc_cmd.add_argument("--seed", type=int, default=None, help="Semente (default vem do config).")
    _add_output_args(mc_cmd)

    schedule_cmd = subparsers.add_parser(
        "schedule",
        help="Avalia a agenda de ciclo de trabalho nu(snr) para OOFSK em AWGN.",
    )
    schedule_cmd.add_argument("--m", type=int, default=8, help="Numero de tons M.")
    schedule_cmd.add_argument("--epsilon", type=float, required=True, help="Folga eps > 0.")
    schedule_cmd.add_argument(
        "--snr-db",
        required=True,
        help="Grade de SNR em dB inicio:fim:passo (passo negativo permitido).",
    )
    _add_output_args(schedule_cmd, workers=False)

    logs_cmd = subparsers.add_parser(
        "logs",
        help="Mostra as entradas mais recentes do log de execucao (JSON).",
    )
    logs_cmd.add_argument(
        "--limit",
        type=int,
        default=50,
        help="Numero maximo de entradas, mais recentes primeiro (1 a 1000).",
    )

    return parser


def _resolve_config(args: argparse.Namespace) -> AppConfig:
    env_file = Path(args.env_file)
    if args.config is None:
        default_path = Path.cwd() / DEFAULT_CONFIG
        if not default_path.exists():
            return default_config()
        config_path = default_path
    else:
        config_path = Path(args.config)
    if not config_path.is_absolute():
        config_path = (Path.cwd() / config_path).resolve()
    if not env_file.is_absolute():
        env_file = (config_path.parent / env_file).resolve()
    return load_config(config_path, dotenv_path=env_file)


def _modulation(args: argparse.Namespace) -> ModulationSpec:
    return ModulationSpec(family=Family(args.modulation), m=args.m, duty=args.duty)


def _channel(kind: str, rician_k: Optional[float]) -> ChannelModel:
    return ChannelModel(kind=ChannelKind(kind), rician_k=rician_k)


def _output_path(args: argparse.Namespace) -> Optional[Path]:
    output = getattr(args, "output", None)
    return Path(output) if output else None


def _check_workers(args: argparse.Namespace) -> None:
    workers = getattr(args, "workers", None)
    if workers is not None and workers < 1:
        raise ValueError("--workers deve ser >= 1.")


def _run_command(args: argparse.Namespace, config: AppConfig) -> Dict[str, object]:
    _check_workers(args)
    output = _output_path(args)

    if args.command == "curve":
        spec = _modulation(args)
        channel = _channel(args.channel, args.rician_k)
        grid = parse_db_range(args.snr_db)
        return run_curve_flow(config, spec, channel, grid, workers=args.workers, output=output)

    if args.command == "minbe":
        family = Family(args.modulation)
        m_list = _parse_int_list(args.m_list)
        duty_list = _parse_float_list(args.duty_list)
        if args.rician_k_list is not None:
            k_list: Sequence[Optional[float]] = _parse_float_list(args.rician_k_list)
        else:
            k_list = [args.rician_k]
        # build every cell once so bad flags fail before any computation
        for k in k_list:
            _channel(args.channel, k)
        for m in m_list:
            for duty in duty_list:
                ModulationSpec(family=family, m=m, duty=duty)
        return run_minbe_flow(
            config,
            family,
            ChannelKind(args.channel),
            m_list,
            duty_list=duty_list,
            rician_k_list=k_list,
            workers=args.workers,
            output=output,
        )

    if args.command == "mc":
        spec = _modulation(args)
        channel = _channel(args.channel, args.rician_k)
        trials = args.trials if args.trials is not None else config.mc.trials_per_input
        if trials < MIN_MC_TRIALS:
            raise ValueError(f"--trials deve ser >= {MIN_MC_TRIALS}.")
        return run_mc_flow(
            config,
            spec,
            channel,
            args.snr_db,
            trials=trials,
            seed=args.seed,
            workers=args.workers,
            output=output,
        )

    if args.command == "schedule":
        ModulationSpec.oofsk(args.m, 1.0)
        grid = parse_db_range(args.snr_db, allow_descending=True)
        return run_schedule_flow(config, args.m, args.epsilon, grid, output=output)

    if args.command == "logs":
        if args.limit < 1:
            raise ValueError("--limit deve ser >= 1.")
        entries = read_runtime_logs(config, limit=args.limit)
        return {"status": "ok", "log_path": str(runtime_log_path(config)), "entries": entries}

    raise ValueError(f"Comando desconhecido: {args.command}")


def _print_report(report: Dict[str, object], to_stdout: bool) -> None:
    text = json.dumps(report, indent=2, ensure_ascii=False, default=str)
    print(text, file=sys.stdout if to_stdout else sys.stderr)


def _fail(config: Optional[AppConfig], command: str, exc: Exception, code: int) -> int:
    payload: Dict[str, object] = {"command": command, "error": str(exc), "exit_code": code}
    if isinstance(exc, NumericalError):
        payload["diagnostics"] = exc.diagnostics
    print(json.dumps(payload, indent=2, ensure_ascii=False, default=str), file=sys.stderr)
    if config is not None:
        try:
            append_runtime_log(config, "command_failed", payload)
        except OSError:
            pass
    return code


def _attach_flag_values(argv: Sequence[str]) -> List[str]:
    """Rewrite `--snr-db -10:15:0.1` as `--snr-db=-10:15:0.1` so argparse keeps the value."""
    tokens = list(argv)
    joined: List[str] = []
    index = 0
    while index < len(tokens):
        token = tokens[index]
        if token in VALUE_FLAGS and index + 1 < len(tokens) and not tokens[index + 1].startswith("--"):
            joined.append(f"{token}={tokens[index + 1]}")
            index += 2
            continue
        joined.append(token)
        index += 1
    return joined


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(_attach_flag_values(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    config: Optional[AppConfig] = None
    try:
        config = _resolve_config(args)
        report = _run_command(args, config)
    except NumericalError as exc:
        return _fail(config, args.command, exc, EXIT_NUMERICAL)
    except (FskBitEnergyError, ValueError, FileNotFoundError) as exc:
        return _fail(config, args.command, exc, EXIT_USAGE)

    csv_text = report.pop("csv_text", None)
    if csv_text is not None:
        sys.stdout.write(str(csv_text))
        sys.stdout.flush()
    _print_report(report, to_stdout=csv_text is None)

    for warning in report.get("warnings", []) or []:
        print(
            json.dumps({"warning": "minimo nao convergiu", **warning}, ensure_ascii=False, default=str),
            file=sys.stderr,
        )

    if args.command == "mc" and not report.get("passed", False):
        return EXIT_VALIDATION_FAILED
    return EXIT_OK
