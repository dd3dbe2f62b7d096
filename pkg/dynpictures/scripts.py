import argparse
import sys
import dynpictures as dp


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


def _exit_code(info):
    if info['status'] == 'ok':
        return EXIT_OK
    e = info['exception']
    if isinstance(e, dp.ValidationError):
        return EXIT_VALIDATION
    if isinstance(e, dp.NumericError):
        return EXIT_NUMERIC
    return EXIT_FAILURE


def build_parser():
    parser = argparse.ArgumentParser(
        prog='dynpictures',
        description='Run dynamical-picture and sensitivity experiments from JSON configs'
    )
    sub = parser.add_subparsers(dest='command')
    run = sub.add_parser('run', help='run an experiment and write its artifacts')
    run.add_argument('config', help='path to the experiment config (JSON)')
    run.add_argument('--out', default=None, help='output directory (default: the config output field)')
    run.add_argument(
        '--override', action='append', default=[], metavar='KEY=VALUE',
        help='dotted config key to override, e.g. numerics.t_final=5 (repeatable)'
    )
    validate = sub.add_parser('validate', help='check a config without running it')
    validate.add_argument('config', help='path to the experiment config (JSON)')
    validate.add_argument('--override', action='append', default=[], metavar='KEY=VALUE')
    return parser


def _run(config, out=None, overrides=None):
    cfg = dp.load_config(config, overrides=overrides)
    result = dp.run_experiment(cfg, out_dir=out)
    print('{}: passed={} ({})'.format(cfg.experiment, result['passed'], result['out_dir']))
    if not result['passed']:
        raise dp.NumericError('{} assertions failed; see {}/summary.json'.format(cfg.experiment, result['out_dir']))
    return result['summary']


def _validate(config, overrides=None):
    cfg = dp.load_config(config, overrides=overrides)
    print('{} config is valid ({} on {})'.format(config, cfg.experiment, cfg.model['kind']))
    return cfg.as_dict()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == 'run':
        info = dp.call_func(_run, args.config, out=args.out, overrides=args.override, verbose=False)
    elif args.command == 'validate':
        info = dp.call_func(_validate, args.config, overrides=args.override, verbose=False)
    else:
        parser.print_help()
        return EXIT_VALIDATION
    if info['status'] != 'ok':
        print('error: {}'.format(info['exception']), file=sys.stderr)
    return _exit_code(info)


if __name__ == '__main__':
    sys.exit(main())
