/**
 * Typed client for the ipa session API.
 *
 * The workbench is a pure consumer: every view is rebuilt from
 * GET /session, and no analysis decision is made on this side.
 */
/** Error carrying the server's status and message for inline display. */
export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function parseBody(response) {
    const text = await response.text();
    try {
        return JSON.parse(text);
    }
    catch {
        throw new ApiError(response.status, `invalid JSON from server: ${text.slice(0, 120)}`);
    }
}
export class ApiClient {
    baseUrl;
    constructor(baseUrl) {
        this.baseUrl = baseUrl;
    }
    async request(path, init) {
        const response = await fetch(this.baseUrl + path, init);
        const body = await parseBody(response);
        if (!response.ok) {
            const message = typeof body === "object" && body !== null && "error" in body
                ? String(body.error)
                : `HTTP ${response.status}`;
            throw new ApiError(response.status, message);
        }
        return body;
    }
    getSession() {
        return this.request("/session");
    }
    submitChoice(pairId, candidateIndex) {
        return this.request("/session/choice", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ pairId, candidateIndex }),
        });
    }
    submitFlag(pairId) {
        return this.request("/session/flag", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ pairId }),
        });
    }
    getTrace(scheduleId) {
        return this.request(`/trace/${encodeURIComponent(scheduleId)}`);
    }
}
