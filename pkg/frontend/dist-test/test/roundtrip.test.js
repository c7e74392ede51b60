/**
 * Workbench round trip against a live session server.
 *
 * Drives the Tournament session with the restoring choices and checks the
 * downloaded spec is byte-identical to the CLI's prefer-restore output,
 * and that pair 1's diamond shows the same four states the analyzer
 * reports.
 */
import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { ApiClient } from "../src/api.js";
import { buildDiamond, restoreCandidateIndex } from "../src/viewmodel.js";
const REPO = resolve(import.meta.dirname ?? ".", "..", "..", "..");
const SPEC = join(REPO, "specs", "tournament.ipa");
const PYENV = { ...process.env, PYTHONPATH: join(REPO, "src") };
let server;
let workdir;
let client;
function python(args, cwd) {
    execFileSync("python3", ["-m", "ipa.cli", ...args], { cwd, env: PYENV });
}
before(async () => {
    workdir = mkdtempSync(join(tmpdir(), "ipa-workbench-"));
    server = spawn("python3", ["-m", "ipa.cli", "serve", SPEC, "--port", "0", "--output-dir", workdir], { cwd: REPO, env: PYENV });
    const port = await new Promise((resolvePort, reject) => {
        let buffer = "";
        const timer = setTimeout(() => reject(new Error("server did not start")), 30_000);
        server.stdout.on("data", (chunk) => {
            buffer += chunk.toString();
            const match = buffer.match(/127\.0\.0\.1:(\d+)/);
            if (match) {
                clearTimeout(timer);
                resolvePort(Number(match[1]));
            }
        });
        server.stderr.on("data", (chunk) => process.stderr.write(chunk));
        server.on("exit", (code) => reject(new Error(`server exited early: ${code}`)));
    });
    client = new ApiClient(`http://127.0.0.1:${port}`);
});
after(() => {
    server?.kill();
    rmSync(workdir, { recursive: true, force: true });
});
test("pair 1's diamond shows the analyzer's four states", async () => {
    const analyzed = mkdtempSync(join(tmpdir(), "ipa-analyze-"));
    try {
        // The analyzer exits 1 on conflicts; that is the expected outcome here.
        try {
            python(["analyze", SPEC, "--output-dir", analyzed], REPO);
            assert.fail("analyze should exit 1 on the original spec");
        }
        catch (err) {
            assert.equal(err.status, 1);
        }
        const conflicts = JSON.parse(readFileSync(join(analyzed, "conflicts.json"), "utf-8"));
        const reference = conflicts.conflicts[0];
        const view = await client.getSession();
        assert.equal(view.done, false);
        assert.ok(view.currentConflict, "session must expose the first conflict");
        const model = buildDiamond(view.currentConflict);
        const expected = buildDiamond(reference);
        assert.deepEqual(model.cards.map((c) => c.trueAtoms), expected.cards.map((c) => c.trueAtoms));
        assert.deepEqual(model.cards.map((c) => c.counters), expected.cards.map((c) => c.counters));
        assert.deepEqual(model.violated, expected.violated);
    }
    finally {
        rmSync(analyzed, { recursive: true, force: true });
    }
});
test("restore choices reproduce the prefer-restore CLI output byte for byte", async () => {
    let view = await client.getSession();
    let guard = 0;
    while (!view.done) {
        assert.ok(view.currentPairId, "active session must name the current pair");
        const restore = restoreCandidateIndex(view.candidates);
        assert.notEqual(restore, null, "expected a restoring candidate");
        view = await client.submitChoice(view.currentPairId, restore);
        guard += 1;
        assert.ok(guard < 10, "session did not converge");
    }
    assert.ok(view.repairedSpec, "completed session offers the repaired spec");
    const cli = mkdtempSync(join(tmpdir(), "ipa-repair-"));
    try {
        python(["repair", SPEC, "--policy", "prefer-restore", "--output-dir", cli], REPO);
        const reference = readFileSync(join(cli, "tournament.repaired.ipa"), "utf-8");
        assert.equal(view.repairedSpec, reference);
    }
    finally {
        rmSync(cli, { recursive: true, force: true });
    }
});
test("stale and out-of-range choices surface as API errors", async () => {
    await assert.rejects(() => client.submitChoice("bogus|pair", 0), (err) => err.status === 409);
});
