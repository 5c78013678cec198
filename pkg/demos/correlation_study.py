"""Rank correlation between final loss and downstream scores on the bundled tables."""

from workbench.analysis import bundled_table, correlation_report, pooled


def main():
    for label, table in (("table 1", bundled_table(1)), ("table 2", bundled_table(2)),
                         ("tables 1 and 2 pooled", pooled(bundled_table(1), bundled_table(2)))):
        for line in correlation_report(table, label=label).lines():
            print(line)
        print()


if __name__ == "__main__":
    main()
