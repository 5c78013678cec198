"""Print analytic parameter counts and forward FLOPs for every results-table preset."""

from workbench.accounting import count_params, forward_flops
from workbench.analysis import bundled_table
from workbench.presets import TABLE_PRESETS, UNSUPPORTED


def main():
    listed = {r["variant"]: r for r in bundled_table(1).rows}
    print(f"{'variant':45s} {'params':>10} {'table':>7} {'fwd TFLOPs':>11}")
    for name, cfg in TABLE_PRESETS.items():
        row = listed.get(name)
        table = f"{row['params']:.0f}M" if row else "-"
        if cfg == UNSUPPORTED:
            print(f"{name:45s} {'unsupported':>10} {table:>7}")
            continue
        params = count_params(cfg).total_params / 1e6
        print(f"{name:45s} {params:9.2f}M {table:>7} {forward_flops(cfg) / 1e12:11.3f}")


if __name__ == "__main__":
    main()
